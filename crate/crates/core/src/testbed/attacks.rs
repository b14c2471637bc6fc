//! Honest flows and attack scripts.

use super::apps::{body_of, pairs, query_of, read, sym, url};
use super::{Parties, Vuln, World};
use crate::runtime::{HttpMessage, UrlValue};

const VICTIM: &str = "alice";
const ATTACKER: &str = "mallory";
const ATTACKER_MERCHANT: &str = "attacker-merchant-0666";

fn ok(resp: &HttpMessage, what: &str) -> Result<(), String> {
    match resp.status {
        Some(200) => Ok(()),
        s => Err(format!("{what} answered {}: {}", s.unwrap_or_default(), String::from_utf8_lossy(&resp.body))),
    }
}

fn link(world: &World, resp: &HttpMessage, ctor: &str) -> Result<UrlValue, String> {
    let args = read(&world.cfg, ctor, &body_of(resp)).ok_or_else(|| format!("no {ctor} in response"))?;
    UrlValue::parse(&args[0])
}

pub async fn honest(world: &World) -> Result<(), String> {
    match world.parties {
        Parties::Oauth { .. } => honest_login(world).await,
        Parties::Paypal { .. } => honest_purchase(world).await,
    }
}

pub async fn run(world: &World, v: Vuln) -> Result<bool, String> {
    match v {
        Vuln::NoStateCheck => session_swap(world, false).await,
        Vuln::StatelessRp => session_swap(world, true).await,
        Vuln::NoReduriBinding => code_redirection(world).await,
        Vuln::NoIpnRevalidation => tampered_payment(world, 1, "1").await,
        Vuln::NoMerchantCheck => tampered_payment(world, 0, ATTACKER_MERCHANT).await,
        Vuln::NoTokenFreshness => replayed_transaction(world).await,
    }
}

fn rp_user(world: &World, b: &super::Browser) -> Option<String> {
    let Parties::Oauth { rp, .. } = &world.parties else { return None };
    let sid = b.cookie(&world.rp_host, &world.cfg.session_cookie)?;
    rp.user_of(&sid)
}

async fn honest_login(world: &World) -> Result<(), String> {
    let cfg = &world.cfg;
    let b = world.browser(VICTIM, true);
    let resp = b.get(&url(cfg, "h", "loginpath", Vec::new())).await?;
    ok(&resp, "login")?;
    let (last, resp) = b.navigate(&link(world, &resp, "pagewithlink")?).await?;
    ok(&resp, "callback")?;
    read(cfg, "success", &body_of(&resp)).ok_or("callback page is not a success page")?;
    if rp_user(world, &b).as_deref() != Some(VICTIM) {
        return Err("relying party did not log the user in".into());
    }
    let args =
        read(cfg, "coderesparams", &query_of(&HttpMessage::request("GET", &last))).ok_or("no code in callback")?;
    let mut end = vec![b.id.clone(), sym(cfg, "h"), sym(cfg, "fb")];
    end.extend(args.iter().skip(1).cloned());
    end.push(args[0].clone());
    b.event("ua_end", end);
    Ok(())
}

/// The attacker starts a login of their own and makes the victim's browser
/// finish it. With `cookie` the victim already holds a session at the RP.
async fn session_swap(world: &World, cookie: bool) -> Result<bool, String> {
    let cfg = &world.cfg;
    let mallory = world.browser(ATTACKER, false);
    let resp = mallory.get(&url(cfg, "h", "loginpath", Vec::new())).await?;
    ok(&resp, "login")?;
    let resp = mallory.get(&link(world, &resp, "pagewithlink")?).await?;
    let callback = resp.header("location").ok_or("provider did not redirect")?;
    let callback = UrlValue::parse(callback)?;
    let victim = world.browser(VICTIM, true);
    if cookie {
        let home = UrlValue { path: "/".into(), query: Vec::new(), ..url(cfg, "h", "loginpath", Vec::new()) };
        victim.get(&home).await?;
    }
    victim.navigate(&callback).await?;
    Ok(rp_user(world, &victim).as_deref() == Some(ATTACKER))
}

/// The victim is sent to the provider with the attacker's redirect_uri; the
/// leaked code is then redeemed in the attacker's own session.
async fn code_redirection(world: &World) -> Result<bool, String> {
    let cfg = &world.cfg;
    let victim = world.browser(VICTIM, true);
    let evil = format!("{}://{}/cb", sym(cfg, "https"), world.attacker_host);
    let appid = sym(cfg, "appid");
    let params = if world.stateless {
        pairs(cfg, "codereqparams", &[&appid, &evil])
    } else {
        pairs(cfg, "codereqparams", &[&appid, &evil, "attacker-state"])
    };
    victim.navigate(&url(cfg, "fb", "oauthpath", params)).await?;
    let leaked = world.attacker.seen.lock().expect("seen").last().cloned().ok_or("no code leaked")?;
    let code = read(cfg, "coderesparams", &query_of(&HttpMessage::request("GET", &leaked))).ok_or("no code leaked")?[0]
        .clone();
    let mallory = world.browser(ATTACKER, false);
    let resp = mallory.get(&url(cfg, "h", "loginpath", Vec::new())).await?;
    ok(&resp, "login")?;
    let authz = link(world, &resp, "pagewithlink")?;
    let query = if world.stateless {
        pairs(cfg, "coderesparams", &[&code])
    } else {
        let args = read(cfg, "codereqparams", &query_of(&HttpMessage::request("GET", &authz))).ok_or("no state")?;
        pairs(cfg, "coderesparams", &[&code, &args[2]])
    };
    mallory.navigate(&url(cfg, "h", "callbackpath", query)).await?;
    Ok(rp_user(world, &mallory).as_deref() == Some(VICTIM))
}

fn shop_parts(world: &World) -> (&super::apps::Shop, &super::apps::PayPal) {
    match &world.parties {
        Parties::Paypal { shop, paypal } => (shop, paypal),
        Parties::Oauth { .. } => panic!("payment attack on an OAuth world"),
    }
}

/// Whether the shop marked `invoice` paid without a matching payment to it.
fn unpaid_but_delivered(world: &World, invoice: &str) -> bool {
    let (shop, paypal) = shop_parts(world);
    let Some(order) = shop.order(invoice) else { return false };
    let merchant = sym(&world.cfg, "merchant");
    order.paid && !paypal.paid(invoice).iter().any(|p| p.amount == order.amount && p.business == merchant)
}

async fn checkout(world: &World, b: &super::Browser, item: &str) -> Result<(UrlValue, Vec<String>), String> {
    let cfg = &world.cfg;
    let resp = b.get(&url(cfg, "s", "checkoutpath", pairs(cfg, "itemparams", &[item]))).await?;
    ok(&resp, "checkout")?;
    let pay = link(world, &resp, "payform")?;
    let args = read(cfg, "payparams", &query_of(&HttpMessage::request("GET", &pay))).ok_or("malformed payment link")?;
    Ok((pay, args))
}

async fn honest_purchase(world: &World) -> Result<(), String> {
    let cfg = &world.cfg;
    let b = world.browser(VICTIM, true);
    let (pay, args) = checkout(world, &b, "book").await?;
    let (_, resp) = b.navigate(&pay).await?;
    ok(&resp, "return")?;
    let receipt = read(cfg, "receipt", &body_of(&resp)).ok_or("no receipt")?;
    let (shop, _) = shop_parts(world);
    if receipt[0] != args[2] || !shop.order(&args[2]).is_some_and(|o| o.paid) {
        return Err("order was not completed".into());
    }
    Ok(())
}

/// Pays with argument `field` of the payment link replaced by `value`.
async fn tampered_payment(world: &World, field: usize, value: &str) -> Result<bool, String> {
    let cfg = &world.cfg;
    let b = world.browser(ATTACKER, false);
    let (pay, mut args) = checkout(world, &b, "book").await?;
    args[field] = value.to_string();
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let tampered = UrlValue { query: pairs(cfg, "payparams", &refs), ..pay };
    b.navigate(&tampered).await?;
    Ok(unpaid_but_delivered(world, &args[2]))
}

/// Pays for a cheap order and presents that transaction for an expensive one.
async fn replayed_transaction(world: &World) -> Result<bool, String> {
    let cfg = &world.cfg;
    let b = world.browser(ATTACKER, false);
    let (pay, _) = checkout(world, &b, "pen").await?;
    let (last, resp) = b.navigate(&pay).await?;
    ok(&resp, "cheap purchase")?;
    let ret = read(cfg, "returnparams", &query_of(&HttpMessage::request("GET", &last))).ok_or("no transaction")?;
    let (_, dear) = checkout(world, &b, "book").await?;
    let replay = url(cfg, "s", "returnpath", pairs(cfg, "returnparams", &[&dear[2], &ret[1]]));
    b.navigate(&replay).await?;
    Ok(unpaid_but_delivered(world, &dear[2]))
}
