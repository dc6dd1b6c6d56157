//! Line-oriented parser for the `appir/1` concrete syntax.
//!
//! ```text
//! appir/1
//! manifest {"package_name":"com.example","app_name":"Example","cert_digest":"ab01"}
//! string base_url "https://api.example.com/"
//! layout main {"type":"LinearLayout","children":[{"type":"Button","id":"go","listeners":["OnClick"]}]}
//! nav main_nav {"host":"MainActivity","destinations":["HomeFragment"]}
//! class MainActivity activity
//!   overrides onKeyDown
//!   method onCreate %state
//!     set_content_view main
//!     %u = res base_url
//!     load_url %u
//!     start_activity DetailActivity
//!   end
//! end
//! ```
//!
//! Registers carry a `%` sigil, text literals are JSON strings and the
//! resource payloads (manifest, layout, nav) are single-line JSON values.

use super::model::*;
use super::validate::{validate, Location, ViolationKind};
use super::AppIrError;
use std::collections::BTreeMap;

pub const HEADER: &str = "appir/1";

/// Line numbers of every parsed entity, keyed by location.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceMap {
    lines: BTreeMap<Location, usize>,
}

impl SourceMap {
    pub fn line_of(&self, loc: &Location) -> Option<usize> {
        self.lines.get(loc).copied()
    }

    fn record(&mut self, loc: Location, line: usize) {
        self.lines.entry(loc).or_insert(line);
    }
}

/// Parses and validates a bundle.
pub fn parse_bundle(source: &str) -> Result<AppBundle, AppIrError> {
    parse_bundle_with_source_map(source).map(|(b, _)| b)
}

/// Parses and validates a bundle, also returning line information.
pub fn parse_bundle_with_source_map(source: &str) -> Result<(AppBundle, SourceMap), AppIrError> {
    let (bundle, map) = parse_unvalidated(source)?;
    if let Some(v) = validate(&bundle).into_iter().next() {
        let line = map.line_of(&v.location);
        return Err(match v.kind {
            k if k.is_duplicate() => AppIrError::DuplicateName {
                name: v.subject,
                line,
            },
            k if k.is_dangling() => AppIrError::DanglingReference {
                name: v.subject,
                line,
            },
            _ => AppIrError::Invalid { violation: v, line },
        });
    }
    Ok((bundle, map))
}

/// Parses the syntax only; semantic invariants are left to [`validate`].
pub fn parse_unvalidated(source: &str) -> Result<(AppBundle, SourceMap), AppIrError> {
    Parser::default().run(source)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Reg(String),
    Str(String),
    Json(serde_json::Value),
    Eq,
}

impl Tok {
    fn describe(&self) -> &'static str {
        match self {
            Tok::Word(_) => "identifier",
            Tok::Reg(_) => "register",
            Tok::Str(_) => "string literal",
            Tok::Json(_) => "JSON value",
            Tok::Eq => "`=`",
        }
    }
}

#[derive(Debug)]
struct Line {
    number: usize,
    toks: Vec<(Tok, usize)>,
    /// Column just past the last character, used for "expected more" errors.
    end_col: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '$' | '-' | '<' | '>' | '/')
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> AppIrError {
    AppIrError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

fn tokenize(number: usize, text: &str) -> Result<Line, AppIrError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (byte, c) = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '=' {
            toks.push((Tok::Eq, col));
            i += 1;
        } else if c == '%' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && is_word_char(chars[j].1) {
                j += 1;
            }
            if j == start {
                return Err(syntax(number, col, "empty register name"));
            }
            let name: String = chars[start..j].iter().map(|(_, c)| c).collect();
            toks.push((Tok::Reg(name), col));
            i = j;
        } else if c == '"' {
            let mut j = i + 1;
            let mut escaped = false;
            let mut closed = false;
            while j < chars.len() {
                let cj = chars[j].1;
                if escaped {
                    escaped = false;
                } else if cj == '\\' {
                    escaped = true;
                } else if cj == '"' {
                    closed = true;
                    break;
                }
                j += 1;
            }
            if !closed {
                return Err(syntax(number, col, "unterminated string literal"));
            }
            let end_byte = chars[j].0 + 1;
            let lit: String = serde_json::from_str(&text[byte..end_byte])
                .map_err(|e| syntax(number, col, format!("bad string literal: {e}")))?;
            toks.push((Tok::Str(lit), col));
            i = j + 1;
        } else if c == '{' || c == '[' {
            let value: serde_json::Value = serde_json::from_str(&text[byte..])
                .map_err(|e| syntax(number, col + e.column().saturating_sub(1), e.to_string()))?;
            toks.push((Tok::Json(value), col));
            i = chars.len();
        } else if is_word_char(c) {
            let mut j = i;
            while j < chars.len() && is_word_char(chars[j].1) {
                j += 1;
            }
            let word: String = chars[i..j].iter().map(|(_, c)| c).collect();
            toks.push((Tok::Word(word), col));
            i = j;
        } else {
            return Err(syntax(number, col, format!("unexpected character `{c}`")));
        }
    }
    Ok(Line {
        number,
        toks,
        end_col: chars.len() + 1,
    })
}

/// Cursor over one line's tokens.
struct Cursor<'a> {
    line: &'a Line,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a Line) -> Self {
        Cursor { line, pos: 0 }
    }

    fn col(&self) -> usize {
        self.line
            .toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or(self.line.end_col)
    }

    fn err(&self, message: impl Into<String>) -> AppIrError {
        syntax(self.line.number, self.col(), message)
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.line.toks.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.line.toks.len()
    }

    fn word(&mut self, what: &str) -> Result<String, AppIrError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                self.pos += 1;
                Ok(w.clone())
            }
            Some(t) => Err(self.err(format!("expected {what}, found {}", t.describe()))),
            None => Err(self.err(format!("expected {what}"))),
        }
    }

    fn reg(&mut self, what: &str) -> Result<Reg, AppIrError> {
        match self.peek() {
            Some(Tok::Reg(r)) => {
                self.pos += 1;
                Ok(Reg(r.clone()))
            }
            Some(t) => Err(self.err(format!("expected {what} register, found {}", t.describe()))),
            None => Err(self.err(format!("expected {what} register"))),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, AppIrError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            Some(t) => Err(self.err(format!("expected {what} string, found {}", t.describe()))),
            None => Err(self.err(format!("expected {what} string"))),
        }
    }

    fn json<T: serde::de::DeserializeOwned>(&mut self, what: &str) -> Result<T, AppIrError> {
        match self.peek() {
            Some(Tok::Json(v)) => {
                let col = self.col();
                self.pos += 1;
                serde_json::from_value(v.clone())
                    .map_err(|e| syntax(self.line.number, col, format!("invalid {what}: {e}")))
            }
            Some(t) => Err(self.err(format!("expected {what} JSON, found {}", t.describe()))),
            None => Err(self.err(format!("expected {what} JSON"))),
        }
    }

    fn regs(&mut self) -> Result<Vec<Reg>, AppIrError> {
        let mut out = Vec::new();
        while !self.at_end() {
            out.push(self.reg("argument")?);
        }
        Ok(out)
    }

    fn finish(&self) -> Result<(), AppIrError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected trailing {}", t.describe()))),
        }
    }
}

#[derive(Default)]
struct Parser {
    bundle: AppBundle,
    map: SourceMap,
    seen_manifest: bool,
    class: Option<AppClass>,
    method: Option<MethodIR>,
}

impl Parser {
    fn run(mut self, source: &str) -> Result<(AppBundle, SourceMap), AppIrError> {
        let mut saw_header = false;
        let mut last_line = 0;
        for (idx, raw) in source.lines().enumerate() {
            let number = idx + 1;
            last_line = number;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !saw_header {
                if trimmed != HEADER {
                    let col = raw.find(|c: char| !c.is_whitespace()).unwrap_or(0) + 1;
                    return Err(syntax(number, col, format!("expected header `{HEADER}`")));
                }
                saw_header = true;
                continue;
            }
            let line = tokenize(number, raw)?;
            self.line(&line)?;
        }
        if !saw_header {
            return Err(syntax(last_line.max(1), 1, format!("missing header `{HEADER}`")));
        }
        if self.method.is_some() || self.class.is_some() {
            return Err(syntax(last_line + 1, 1, "unexpected end of input, missing `end`"));
        }
        if !self.seen_manifest {
            return Err(syntax(last_line + 1, 1, "missing `manifest` declaration"));
        }
        Ok((self.bundle, self.map))
    }

    fn line(&mut self, line: &Line) -> Result<(), AppIrError> {
        let mut cur = Cursor::new(line);
        if self.method.is_some() {
            if let Some(Tok::Word(w)) = cur.peek() {
                if w == "end" {
                    cur.next();
                    cur.finish()?;
                    let m = self.method.take().expect("method open");
                    self.class.as_mut().expect("class open").methods.push(m);
                    return Ok(());
                }
            }
            let instr = parse_instruction(&mut cur)?;
            let class = self.class.as_ref().expect("class open");
            let method = self.method.as_mut().expect("method open");
            self.map.record(
                Location::Instruction(
                    MethodRef::new(&class.name, &method.name),
                    method.instructions.len(),
                ),
                line.number,
            );
            method.instructions.push(instr);
            return Ok(());
        }
        let keyword = cur.word("keyword")?;
        if self.class.is_some() {
            return self.class_line(&keyword, &mut cur, line.number);
        }
        match keyword.as_str() {
            "manifest" => {
                if self.seen_manifest {
                    return Err(AppIrError::DuplicateName {
                        name: "manifest".into(),
                        line: Some(line.number),
                    });
                }
                self.bundle.manifest = cur.json("manifest")?;
                self.seen_manifest = true;
                self.map.record(Location::Manifest, line.number);
            }
            "string" => {
                let id = cur.word("string resource id")?;
                let text = cur.string("resource text")?;
                if self.bundle.string_resources.contains_key(&id) {
                    return Err(AppIrError::DuplicateName {
                        name: id,
                        line: Some(line.number),
                    });
                }
                self.map.record(Location::StringResource(id.clone()), line.number);
                self.bundle.string_resources.insert(id, text);
            }
            "layout" => {
                let id = cur.word("layout id")?;
                let root: WidgetNode = cur.json("widget tree")?;
                self.map.record(Location::Layout(id.clone()), line.number);
                self.bundle.layouts.push(LayoutResource { id, root });
            }
            "nav" => {
                let id = cur.word("navigation graph id")?;
                #[derive(serde::Deserialize)]
                struct NavBody {
                    host: String,
                    destinations: Vec<String>,
                }
                let body: NavBody = cur.json("navigation graph")?;
                self.map.record(Location::NavGraph(id.clone()), line.number);
                self.bundle.nav_graphs.push(NavGraphResource {
                    id,
                    host_class: body.host,
                    destinations: body.destinations,
                });
            }
            "class" => {
                let name = cur.word("class name")?;
                let kind_word = cur.word("class kind")?;
                let kind = ClassKind::from_keyword(&kind_word).ok_or_else(|| {
                    syntax(
                        line.number,
                        line.toks[2].1,
                        format!("unknown class kind `{kind_word}`"),
                    )
                })?;
                let mut class = AppClass::new(name, kind);
                if !cur.at_end() {
                    let kw = cur.word("`inner_of`")?;
                    if kw != "inner_of" {
                        return Err(syntax(line.number, line.toks[3].1, "expected `inner_of`"));
                    }
                    class.inner_of = Some(cur.word("outer class name")?);
                }
                cur.finish()?;
                self.map.record(Location::Class(class.name.clone()), line.number);
                self.class = Some(class);
                return Ok(());
            }
            other => {
                return Err(syntax(
                    line.number,
                    line.toks[0].1,
                    format!("unknown declaration `{other}`"),
                ))
            }
        }
        cur.finish()
    }

    fn class_line(
        &mut self,
        keyword: &str,
        cur: &mut Cursor<'_>,
        number: usize,
    ) -> Result<(), AppIrError> {
        let class = self.class.as_mut().expect("class open");
        match keyword {
            "end" => {
                cur.finish()?;
                let class = self.class.take().expect("class open");
                self.bundle.classes.push(class);
            }
            "overrides" => {
                if cur.at_end() {
                    return Err(cur.err("expected at least one overridden method name"));
                }
                while !cur.at_end() {
                    let name = cur.word("method name")?;
                    class.overrides_system_listener.insert(name);
                }
            }
            "method" => {
                let name = cur.word("method name")?;
                let params = cur.regs()?;
                self.map.record(
                    Location::Method(MethodRef::new(&class.name, &name)),
                    number,
                );
                self.method = Some(MethodIR {
                    name,
                    params,
                    instructions: Vec::new(),
                });
            }
            other => {
                return Err(syntax(
                    number,
                    cur.line.toks[0].1,
                    format!("unknown class member `{other}`"),
                ))
            }
        }
        Ok(())
    }
}

fn parse_start_target(cur: &mut Cursor<'_>) -> Result<StartTarget, AppIrError> {
    match cur.peek() {
        Some(Tok::Reg(r)) => {
            cur.next();
            Ok(StartTarget::Intent(Reg(r.clone())))
        }
        _ => Ok(StartTarget::Class(cur.word("target class or intent register")?)),
    }
}

fn parse_method_ref(cur: &mut Cursor<'_>) -> Result<MethodRef, AppIrError> {
    let col = cur.col();
    let word = cur.word("call target `Class.method`")?;
    match word.rsplit_once('.') {
        Some((class, method)) if !class.is_empty() && !method.is_empty() => {
            Ok(MethodRef::new(class, method))
        }
        _ => Err(syntax(
            cur.line.number,
            col,
            format!("call target `{word}` is not of the form `Class.method`"),
        )),
    }
}

fn parse_instruction(cur: &mut Cursor<'_>) -> Result<Instruction, AppIrError> {
    let dst = if matches!(cur.line.toks.get(1), Some((Tok::Eq, _))) {
        let r = cur.reg("destination")?;
        cur.next();
        Some(r)
    } else {
        None
    };
    let op_col = cur.col();
    let op = cur.word("instruction")?;
    let need_dst = |what: &str| -> Result<Reg, AppIrError> {
        dst.clone().ok_or_else(|| {
            syntax(
                cur.line.number,
                op_col,
                format!("`{what}` requires a destination register"),
            )
        })
    };
    let no_dst = |what: &str| -> Result<(), AppIrError> {
        if dst.is_some() {
            Err(syntax(
                cur.line.number,
                op_col,
                format!("`{what}` does not produce a value"),
            ))
        } else {
            Ok(())
        }
    };
    let instr = match op.as_str() {
        "const" => Instruction::ConstText {
            dst: need_dst("const")?,
            value: cur.string("constant")?,
        },
        "res" => Instruction::ResourceText {
            dst: need_dst("res")?,
            resource: cur.word("resource id")?,
        },
        "runtime" => Instruction::RuntimeText {
            dst: need_dst("runtime")?,
        },
        "append" | "assign" | "replace" | "concat" => {
            let kind = TextOpKind::from_keyword(&op).expect("text op keyword");
            let dst = need_dst(&op)?;
            let operands = cur.regs()?;
            let ok = match kind.arity() {
                Some(n) => operands.len() == n,
                None => !operands.is_empty(),
            };
            if !ok {
                let expected = kind
                    .arity()
                    .map(|n| n.to_string())
                    .unwrap_or_else(|| "at least 1".into());
                return Err(syntax(
                    cur.line.number,
                    op_col,
                    format!("`{op}` takes {expected} operands, got {}", operands.len()),
                ));
            }
            Instruction::TextOp {
                dst,
                op: kind,
                operands,
            }
        }
        "call" => {
            let target = parse_method_ref(cur)?;
            let args = cur.regs()?;
            Instruction::Call { dst, target, args }
        }
        "return" => {
            no_dst("return")?;
            let value = if cur.at_end() {
                None
            } else {
                Some(cur.reg("return value")?)
            };
            Instruction::Return { value }
        }
        _ => {
            let call = match op.as_str() {
                "set_content_view" => ApiCall::SetContentView {
                    layout: cur.word("layout id")?,
                },
                "inflate" => ApiCall::Inflate {
                    layout: cur.word("layout id")?,
                },
                "find_view_by_id" => ApiCall::FindViewById {
                    widget: cur.word("widget id")?,
                },
                "new_widget" => ApiCall::NewWidget {
                    widget_type: cur.word("widget type")?,
                },
                "attach_widget" => ApiCall::AttachWidget {
                    parent: cur.reg("parent")?,
                    child: cur.reg("child")?,
                },
                "load_url" => ApiCall::LoadUrl {
                    url: cur.reg("url")?,
                },
                "start_activity" => ApiCall::StartActivity {
                    target: parse_start_target(cur)?,
                },
                "start_activity_for_result" => ApiCall::StartActivityForResult {
                    target: parse_start_target(cur)?,
                },
                "new_intent" => ApiCall::NewIntent {
                    target: cur.word("intent target class")?,
                },
                "nav_navigate" => ApiCall::NavNavigate {
                    destination: cur.word("destination class")?,
                },
                "set_on_click_listener" => ApiCall::SetOnClickListener {
                    widget: cur.reg("widget")?,
                    listener: cur.word("listener class")?,
                },
                "thread_start" => ApiCall::ThreadStart {
                    class: cur.word("runnable class")?,
                },
                "async_execute" => ApiCall::AsyncExecute {
                    class: cur.word("task class")?,
                },
                "send_message" => ApiCall::SendMessage {
                    class: cur.word("handler class")?,
                },
                other => {
                    return Err(syntax(
                        cur.line.number,
                        op_col,
                        format!("unknown instruction `{other}`"),
                    ))
                }
            };
            if call.returns_value() {
                if dst.is_none() && matches!(call, ApiCall::FindViewById { .. } | ApiCall::NewWidget { .. } | ApiCall::NewIntent { .. }) {
                    need_dst(&op)?;
                }
            } else {
                no_dst(&op)?;
            }
            Instruction::Api { dst, call }
        }
    };
    cur.finish()?;
    Ok(instr)
}

/// Kinds of violation reported as `DuplicateName` by [`parse_bundle`].
impl ViolationKind {
    pub fn is_duplicate(self) -> bool {
        matches!(
            self,
            ViolationKind::DuplicateClass
                | ViolationKind::DuplicateMethod
                | ViolationKind::DuplicateLayout
                | ViolationKind::DuplicateNavGraph
                | ViolationKind::DuplicateWidgetId
        )
    }

    pub fn is_dangling(self) -> bool {
        matches!(
            self,
            ViolationKind::DanglingLayout
                | ViolationKind::DanglingString
                | ViolationKind::DanglingClass
                | ViolationKind::DanglingWidgetId
                | ViolationKind::UnknownOuterClass
        )
    }
}
