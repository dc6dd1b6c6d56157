use super::model::*;
use super::parse::HEADER;
use std::fmt::Write;

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn regs(list: &[Reg]) -> String {
    list.iter().map(|r| format!(" {r}")).collect()
}

fn target(t: &StartTarget) -> String {
    match t {
        StartTarget::Class(c) => c.clone(),
        StartTarget::Intent(r) => r.to_string(),
    }
}

/// Renders an instruction in concrete syntax (without indentation).
pub fn write_instruction(instr: &Instruction) -> String {
    let (dst, body) = match instr {
        Instruction::ConstText { dst, value } => (Some(dst), format!("const {}", quote(value))),
        Instruction::ResourceText { dst, resource } => (Some(dst), format!("res {resource}")),
        Instruction::RuntimeText { dst } => (Some(dst), "runtime".to_string()),
        Instruction::TextOp { dst, op, operands } => {
            (Some(dst), format!("{}{}", op.keyword(), regs(operands)))
        }
        Instruction::Call {
            dst,
            target: t,
            args,
        } => (dst.as_ref(), format!("call {t}{}", regs(args))),
        Instruction::Return { value } => (
            None,
            match value {
                Some(v) => format!("return {v}"),
                None => "return".to_string(),
            },
        ),
        Instruction::Api { dst, call } => {
            let kw = call.keyword();
            let rest = match call {
                ApiCall::SetContentView { layout } | ApiCall::Inflate { layout } => layout.clone(),
                ApiCall::FindViewById { widget } => widget.clone(),
                ApiCall::NewWidget { widget_type } => widget_type.clone(),
                ApiCall::AttachWidget { parent, child } => format!("{parent} {child}"),
                ApiCall::LoadUrl { url } => url.to_string(),
                ApiCall::StartActivity { target: t }
                | ApiCall::StartActivityForResult { target: t } => target(t),
                ApiCall::NewIntent { target: c }
                | ApiCall::NavNavigate { destination: c }
                | ApiCall::ThreadStart { class: c }
                | ApiCall::AsyncExecute { class: c }
                | ApiCall::SendMessage { class: c } => c.clone(),
                ApiCall::SetOnClickListener { widget, listener } => format!("{widget} {listener}"),
            };
            (dst.as_ref(), format!("{kw} {rest}"))
        }
    };
    match dst {
        Some(d) => format!("{d} = {body}"),
        None => body,
    }
}

/// Canonical text form of a bundle. `parse_bundle(write_bundle(b)) == b`.
pub fn write_bundle(bundle: &AppBundle) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    let manifest = serde_json::to_string(&bundle.manifest).expect("manifest serializes");
    let _ = writeln!(out, "manifest {manifest}");
    for (id, text) in &bundle.string_resources {
        let _ = writeln!(out, "string {id} {}", quote(text));
    }
    for l in &bundle.layouts {
        let tree = serde_json::to_string(&l.root).expect("layout serializes");
        let _ = writeln!(out, "layout {} {tree}", l.id);
    }
    for g in &bundle.nav_graphs {
        let body = serde_json::json!({ "host": g.host_class, "destinations": g.destinations });
        let _ = writeln!(out, "nav {} {body}", g.id);
    }
    for c in &bundle.classes {
        out.push('\n');
        let _ = write!(out, "class {} {}", c.name, c.kind.keyword());
        if let Some(outer) = &c.inner_of {
            let _ = write!(out, " inner_of {outer}");
        }
        out.push('\n');
        if !c.overrides_system_listener.is_empty() {
            let names: Vec<&str> = c.overrides_system_listener.iter().map(String::as_str).collect();
            let _ = writeln!(out, "  overrides {}", names.join(" "));
        }
        for m in &c.methods {
            let _ = writeln!(out, "  method {}{}", m.name, regs(&m.params));
            for instr in &m.instructions {
                let _ = writeln!(out, "    {}", write_instruction(instr));
            }
            out.push_str("  end\n");
        }
        out.push_str("end\n");
    }
    out
}
