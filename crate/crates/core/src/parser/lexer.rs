use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Dot,
    Eq,
    Bar,
    Bang,
    Implies,
    And,
    Neq,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Bar => "`|`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Implies => "`==>`".into(),
            Tok::And => "`&&`".into(),
            Tok::Neq => "`<>`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

pub fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '(' && chars.get(i + 1) == Some(&'*') {
            let (sl, sc) = (line, col);
            let mut depth = 0usize;
            loop {
                if i >= chars.len() {
                    return Err(ParseError {
                        line: sl,
                        column: sc,
                        expected: "`*)` closing this comment".into(),
                        found: "end of input".into(),
                    });
                }
                if chars[i] == '(' && chars.get(i + 1) == Some(&'*') {
                    depth += 1;
                    bump!();
                    bump!();
                } else if chars[i] == '*' && chars.get(i + 1) == Some(&')') {
                    depth -= 1;
                    bump!();
                    bump!();
                    if depth == 0 {
                        break;
                    }
                } else {
                    bump!();
                }
            }
            continue;
        }
        let (tl, tc) = (line, col);
        let tok = if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                s.push(chars[i]);
                bump!();
            }
            out.push(Spanned { tok: Tok::Ident(s), line: tl, column: tc });
            continue;
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump!();
            }
            out.push(Spanned { tok: Tok::Number(s), line: tl, column: tc });
            continue;
        } else {
            let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
            let (tok, len) = if rest.starts_with("==>") {
                (Tok::Implies, 3)
            } else if rest.starts_with("&&") {
                (Tok::And, 2)
            } else if rest.starts_with("<>") {
                (Tok::Neq, 2)
            } else {
                match c {
                    '(' => (Tok::LParen, 1),
                    ')' => (Tok::RParen, 1),
                    '[' => (Tok::LBracket, 1),
                    ']' => (Tok::RBracket, 1),
                    ',' => (Tok::Comma, 1),
                    ';' => (Tok::Semi, 1),
                    ':' => (Tok::Colon, 1),
                    '.' => (Tok::Dot, 1),
                    '=' => (Tok::Eq, 1),
                    '|' => (Tok::Bar, 1),
                    '!' => (Tok::Bang, 1),
                    '⇒' | '⟹' => (Tok::Implies, 1),
                    '∧' => (Tok::And, 1),
                    _ => {
                        return Err(ParseError {
                            line: tl,
                            column: tc,
                            expected: "a token".into(),
                            found: format!("character `{c}`"),
                        })
                    }
                }
            };
            for _ in 0..len {
                bump!();
            }
            tok
        };
        out.push(Spanned { tok, line: tl, column: tc });
    }
    // end of input is reported at the last character so positions stay inside the source
    let last = last_position(&chars);
    out.push(Spanned { tok: Tok::Eof, line: last.0, column: last.1 });
    Ok(out)
}

fn last_position(chars: &[char]) -> (usize, usize) {
    let (mut line, mut col, mut last) = (1, 1, (1, 1));
    for &c in chars {
        last = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn arrows_and_comments() {
        assert_eq!(
            toks("a (* x (* nested *) *) ==> ⇒ ⟹ = &&"),
            vec![Tok::Ident("a".into()), Tok::Implies, Tok::Implies, Tok::Implies, Tok::Eq, Tok::And, Tok::Eof]
        );
    }

    #[test]
    fn positions_are_one_based() {
        let t = lex("let\n  P").unwrap();
        assert_eq!((t[0].line, t[0].column), (1, 1));
        assert_eq!((t[1].line, t[1].column), (2, 3));
        assert_eq!((t[2].line, t[2].column), (2, 3));
    }

    #[test]
    fn unterminated_comment() {
        let e = lex("(* open").unwrap_err();
        assert_eq!((e.line, e.column), (1, 1));
    }
}
