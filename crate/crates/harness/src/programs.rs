//! Random straight-line text programs ending in one `load_url`, with a
//! forward interpreter that serves as the oracle for backward taint.
//!
//! The interpreter runs the program on its own representation, not on the
//! parsed bundle. Every value is a sequence of segments tagged with the
//! instruction that produced them; runtime segments carry no text and are
//! never tokenized, but constant segments concatenated with them survive.

use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Longest main body, excluding the sink.
pub const MAX_MAIN: usize = 11;
const MAX_HELPERS: usize = 2;
const MAX_HELPER_BODY: usize = 4;
const REGS: [&str; 5] = ["a", "b", "c", "d", "e"];
const DELIMITERS: [char; 6] = ['/', '?', '&', '=', ':', '.'];

const CONSTS: [&str; 8] = [
    "https://pay.example.com",
    "/api/v1/",
    "?key=",
    "token=abc&x=1",
    "cdn.host",
    "10.0.0.7:8080",
    "",
    "q",
];
const RESOURCES: [(&str, &str); 2] = [("s0", "res.alpha/path"), ("s1", "q=res&beta")];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextKind {
    Append,
    Assign,
    /// `replace subject pattern replacement`; the pattern is not copied.
    Replace,
    Concat,
}

impl TextKind {
    fn keyword(self) -> &'static str {
        match self {
            TextKind::Append => "append",
            TextKind::Assign => "assign",
            TextKind::Replace => "replace",
            TextKind::Concat => "concat",
        }
    }
}

/// Operand: a register name, or the method parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Reg(usize),
    Param,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Const(&'static str),
    Res(usize),
    Runtime,
    Text(TextKind, Vec<Operand>),
    /// Calls helper `h` with one argument.
    Call(usize, Operand),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub dst: usize,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    /// Helper bodies; each takes `%p` and returns its last register.
    pub helpers: Vec<Vec<Stmt>>,
    /// Main body. Its first statement always defines a register.
    pub main: Vec<Stmt>,
    pub sink: usize,
}

fn operand<R: Rng>(defined: &[usize], has_param: bool, rng: &mut R) -> Operand {
    if has_param && (defined.is_empty() || rng.gen_bool(0.25)) {
        return Operand::Param;
    }
    Operand::Reg(*defined.choose(rng).expect("a defined register"))
}

fn body<R: Rng>(len: usize, helpers: usize, has_param: bool, rng: &mut R) -> Vec<Stmt> {
    let mut out = Vec::with_capacity(len);
    let mut defined: Vec<usize> = Vec::new();
    for i in 0..len {
        let dst = rng.gen_range(0..REGS.len());
        let can_use = has_param || !defined.is_empty();
        let roll = if can_use { rng.gen_range(0..14) } else { rng.gen_range(0..6) };
        let op = match roll {
            0..=2 => Op::Const(CONSTS[rng.gen_range(0..CONSTS.len())]),
            3 => Op::Res(rng.gen_range(0..RESOURCES.len())),
            4..=5 => Op::Runtime,
            6..=12 if i > 0 || has_param => {
                let kind = *[TextKind::Append, TextKind::Assign, TextKind::Replace, TextKind::Concat]
                    .choose(rng)
                    .expect("kinds");
                let n = match kind {
                    TextKind::Append => 2,
                    TextKind::Assign => 1,
                    TextKind::Replace => 3,
                    TextKind::Concat => rng.gen_range(1..=4),
                };
                Op::Text(kind, (0..n).map(|_| operand(&defined, has_param, rng)).collect())
            }
            _ if helpers > 0 && can_use => Op::Call(rng.gen_range(0..helpers), operand(&defined, has_param, rng)),
            _ => Op::Runtime,
        };
        out.push(Stmt { dst, op });
        if !defined.contains(&dst) {
            defined.push(dst);
        }
    }
    out
}

/// A program of at most `MAX_MAIN + 1` main instructions.
pub fn random_program<R: Rng>(rng: &mut R) -> Program {
    let n_helpers = rng.gen_range(0..=MAX_HELPERS);
    let helpers = (0..n_helpers)
        .map(|_| {
            let len = rng.gen_range(1..=MAX_HELPER_BODY);
            body(len, 0, true, rng)
        })
        .collect();
    let len = rng.gen_range(1..=MAX_MAIN);
    let main = body(len, n_helpers, false, rng);
    let defined: Vec<usize> = main.iter().map(|s| s.dst).collect();
    let sink = *defined.choose(rng).expect("main defines a register");
    Program { helpers, main, sink }
}

fn operand_text(o: &Operand) -> String {
    match o {
        Operand::Reg(r) => format!("%{}", REGS[*r]),
        Operand::Param => "%p".to_string(),
    }
}

fn stmt_text(s: &Stmt) -> String {
    let dst = REGS[s.dst];
    match &s.op {
        Op::Const(c) => format!("%{dst} = const {}", serde_json::to_string(c).expect("string")),
        Op::Res(r) => format!("%{dst} = res {}", RESOURCES[*r].0),
        Op::Runtime => format!("%{dst} = runtime"),
        Op::Text(k, ops) => {
            let args: Vec<String> = ops.iter().map(operand_text).collect();
            format!("%{dst} = {} {}", k.keyword(), args.join(" "))
        }
        Op::Call(h, a) => format!("%{dst} = call H{h}.run {}", operand_text(a)),
    }
}

/// App-IR text: helpers as static classes, main body in `Main.onCreate`.
pub fn render(p: &Program) -> String {
    let mut out = String::from("appir/1\n");
    out.push_str(r#"manifest {"package_name":"rand.prog","app_name":"R","cert_digest":"ff"}"#);
    out.push('\n');
    for (id, text) in RESOURCES {
        out.push_str(&format!("string {id} {}\n", serde_json::to_string(text).expect("string")));
    }
    for (h, stmts) in p.helpers.iter().enumerate() {
        out.push_str(&format!("class H{h} plain\n  method run %p\n"));
        for s in stmts {
            out.push_str(&format!("    {}\n", stmt_text(s)));
        }
        let last = stmts.last().expect("helper bodies are non-empty");
        out.push_str(&format!("    return %{}\n  end\nend\n", REGS[last.dst]));
    }
    out.push_str("class Main activity\n  method onCreate\n");
    for s in &p.main {
        out.push_str(&format!("    {}\n", stmt_text(s)));
    }
    out.push_str(&format!("    load_url %{}\n  end\nend\n", REGS[p.sink]));
    out
}

/// Producing instruction: `(helper or None for main, statement index)`.
type Origin = (Option<usize>, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
struct Segment {
    origin: Origin,
    text: Option<&'static str>,
}

type Value = Vec<Segment>;

fn run(p: &Program, helper: Option<usize>, param: &Value) -> (BTreeMap<usize, Value>, Value) {
    let stmts = match helper {
        Some(h) => &p.helpers[h],
        None => &p.main,
    };
    let mut env: BTreeMap<usize, Value> = BTreeMap::new();
    let get = |env: &BTreeMap<usize, Value>, o: &Operand| -> Value {
        match o {
            Operand::Reg(r) => env.get(r).cloned().expect("generator only reads defined registers"),
            Operand::Param => param.clone(),
        }
    };
    for (i, s) in stmts.iter().enumerate() {
        let origin = (helper, i);
        let v = match &s.op {
            Op::Const(c) => vec![Segment { origin, text: Some(c) }],
            Op::Res(r) => vec![Segment {
                origin,
                text: Some(RESOURCES[*r].1),
            }],
            Op::Runtime => vec![Segment { origin, text: None }],
            Op::Text(kind, ops) => ops
                .iter()
                .enumerate()
                .filter(|(j, _)| !(*kind == TextKind::Replace && *j == 1))
                .flat_map(|(_, o)| get(&env, o))
                .collect(),
            Op::Call(h, a) => run(p, Some(*h), &get(&env, a)).1,
        };
        env.insert(s.dst, v);
    }
    let ret = stmts.last().map(|s| env[&s.dst].clone()).unwrap_or_default();
    (env, ret)
}

/// Tokens of the sink value and the number of distinct runtime sources
/// flowing into it.
pub fn interpret(p: &Program) -> (BTreeSet<String>, usize) {
    let (env, _) = run(p, None, &Vec::new());
    let value = &env[&p.sink];
    let mut tokens = BTreeSet::new();
    let mut runtime: BTreeSet<Origin> = BTreeSet::new();
    for seg in value {
        match seg.text {
            Some(t) => tokens.extend(t.split(DELIMITERS).filter(|s| !s.is_empty()).map(str::to_string)),
            None => {
                runtime.insert(seg.origin);
            }
        }
    }
    (tokens, runtime.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixed_flow_keeps_constants() {
        let p = Program {
            helpers: vec![],
            main: vec![
                Stmt { dst: 0, op: Op::Const("a.b/c") },
                Stmt { dst: 1, op: Op::Runtime },
                Stmt {
                    dst: 2,
                    op: Op::Text(TextKind::Append, vec![Operand::Reg(0), Operand::Reg(1)]),
                },
            ],
            sink: 2,
        };
        let (tokens, runtime) = interpret(&p);
        assert_eq!(tokens, ["a", "b", "c"].iter().map(|s| s.to_string()).collect());
        assert_eq!(runtime, 1);
    }

    #[test]
    fn replace_pattern_is_dropped() {
        let p = Program {
            helpers: vec![],
            main: vec![
                Stmt { dst: 0, op: Op::Const("x") },
                Stmt { dst: 1, op: Op::Const("y") },
                Stmt {
                    dst: 2,
                    op: Op::Text(TextKind::Replace, vec![Operand::Reg(0), Operand::Reg(1), Operand::Reg(0)]),
                },
            ],
            sink: 2,
        };
        assert_eq!(interpret(&p).0, ["x".to_string()].into());
    }

    #[test]
    fn generated_programs_parse_and_stay_short() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = random_program(&mut rng);
            assert!(p.main.len() < 12);
            uedetect_core::app_ir::parse_bundle(&render(&p)).unwrap();
        }
    }
}
