use proptest::prelude::*;
use uedetect_core::app_ir::{
    apply_rename_obfuscation, parse_bundle, parse_bundle_with_source_map, parse_unvalidated,
    rename_map, validate, write_bundle, AppIrError, ClassKind, Instruction, Location,
    ViolationKind,
};

const HEAD: &str = "appir/1\nmanifest {\"package_name\":\"a.b\",\"app_name\":\"AB\",\"cert_digest\":\"01\"}\n";

fn src(body: &str) -> String {
    format!("{HEAD}{body}")
}

const SAMPLE: &str = r#"appir/1
# a comment line
manifest {"package_name":"com.loan","app_name":"Loan","cert_digest":"ab","permissions":["INTERNET"],"declared_activities":["Home","Personal"]}
string base "https://api.loan.example/"
layout home {"type":"LinearLayout","children":[{"type":"Button","id":"apply","listeners":["OnClick"]},{"type":"WebView","id":"web"}]}
nav g {"host":"Home","destinations":["Offers"]}
class Home activity
  overrides onKeyDown
  method onCreate %state
    set_content_view home
    %b = find_view_by_id apply
    set_on_click_listener %b Home$1
    %u = res base
    %t = runtime
    %q = replace %u %t %u
    %v = concat %u %q %t
    load_url %v
  end
  method onKeyDown %k
    %i = new_intent Personal
    start_activity %i
    return
  end
end
class Home$1 listener inner_of Home
  method onClick %v
    start_activity_for_result Personal
    nav_navigate Offers
    thread_start Worker
  end
end
class Personal activity
  method onCreate
    %x = call Util.make
  end
end
class Offers fragment
end
class Worker plain
  method run
  end
end
class Util plain
  method make
    %c = const "k=v"
    return %c
  end
end
"#;

#[test]
fn minimal_bundle() {
    let b = parse_bundle(&src("layout l {\"type\":\"TextView\"}\nclass A activity\nend\n")).unwrap();
    assert_eq!(b.classes.len(), 1);
    assert_eq!(b.layouts.len(), 1);
    assert!(b.classes[0].methods.is_empty());
}

#[test]
fn sample_parses_and_round_trips() {
    let b = parse_bundle(SAMPLE).unwrap();
    assert_eq!(b.classes.len(), 6);
    assert_eq!(b.class("Home$1").unwrap().inner_of.as_deref(), Some("Home"));
    assert!(b.class("Home").unwrap().overrides_system_listener.contains("onKeyDown"));
    assert_eq!(b.instruction_count(), 17);
    let text = write_bundle(&b);
    let again = parse_bundle(&text).unwrap();
    assert_eq!(again, b);
    assert_eq!(write_bundle(&again), text);
}

#[test]
fn dangling_layout() {
    let err = parse_bundle(&src("class A activity\n  method onCreate\n    set_content_view nope\n  end\nend\n"))
        .unwrap_err();
    assert!(matches!(err, AppIrError::DanglingReference { ref name, line: Some(5) } if name == "nope"));
}

#[test]
fn duplicate_class_is_reported() {
    let err = parse_bundle(&src("class A activity\nend\nclass A plain\nend\n")).unwrap_err();
    assert!(matches!(err, AppIrError::DuplicateName { ref name, .. } if name == "A"));
    let (b, _) = parse_unvalidated(&src("class A activity\nend\nclass A plain\nend\n")).unwrap();
    let v = validate(&b);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].kind, ViolationKind::DuplicateClass);
    assert_eq!(v[0].kind.name(), "duplicate_class");
}

#[test]
fn self_inner_of_is_a_cycle() {
    let (b, _) = parse_unvalidated(&src("class A plain inner_of A\nend\n")).unwrap();
    let v = validate(&b);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].kind.name(), "inner_of_cycle");
    assert!(matches!(v[0].location, Location::Class(ref c) if c == "A"));
}

#[test]
fn undefined_register() {
    let (b, _) = parse_unvalidated(&src("class A activity\n  method m\n    load_url %nope\n  end\nend\n")).unwrap();
    let v = validate(&b);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].kind, ViolationKind::UndefinedRegister);
}

#[test]
fn start_target_must_be_ui() {
    let (b, _) =
        parse_unvalidated(&src("class A activity\n  method m\n    start_activity P\n  end\nend\nclass P plain\nend\n"))
            .unwrap();
    assert_eq!(validate(&b)[0].kind, ViolationKind::TransitionTargetKind);
}

#[test]
fn syntax_errors_carry_position() {
    let e = parse_bundle(&src("class A activity\n  method m\n    %x = cosnt \"a\"\n  end\nend\n")).unwrap_err();
    assert!(matches!(e, AppIrError::Syntax { line: 5, col: 10, .. }), "{e:?}");
    let e = parse_bundle("appir/2\n").unwrap_err();
    assert!(matches!(e, AppIrError::Syntax { line: 1, col: 1, .. }));
    let e = parse_bundle(&src("class A activity\n  method m\n")).unwrap_err();
    assert!(matches!(e, AppIrError::Syntax { .. }));
    let e = parse_bundle(&src("string s \"open")).unwrap_err();
    assert!(matches!(e, AppIrError::Syntax { line: 3, col: 10, .. }), "{e:?}");
}

#[test]
fn source_map_points_at_instructions() {
    let (b, map) = parse_bundle_with_source_map(SAMPLE).unwrap();
    let home = b.class("Home").unwrap();
    assert_eq!(home.kind, ClassKind::Activity);
    let m = uedetect_core::app_ir::MethodRef::new("Home", "onCreate");
    assert_eq!(map.line_of(&Location::Instruction(m, 0)), Some(10));
}

#[test]
fn rename_is_deterministic_and_preserves_constants() {
    let b = parse_bundle(SAMPLE).unwrap();
    let o1 = apply_rename_obfuscation(&b, 5);
    let o2 = apply_rename_obfuscation(&b, 5);
    assert_eq!(o1, o2);
    assert!(validate(&o1).is_empty());
    assert_ne!(o1, b);
    assert_eq!(o1.instruction_count(), b.instruction_count());
    assert_eq!(o1.string_resources, b.string_resources);
    let consts = |b: &uedetect_core::app_ir::AppBundle| -> Vec<String> {
        let mut v: Vec<String> = b
            .classes
            .iter()
            .flat_map(|c| &c.methods)
            .flat_map(|m| &m.instructions)
            .filter_map(|i| match i {
                Instruction::ConstText { value, .. } => Some(value.clone()),
                _ => None,
            })
            .collect();
        v.sort();
        v
    };
    assert_eq!(consts(&o1), consts(&b));
    // Lifecycle and listener entry points keep their names.
    let map = rename_map(&b, 5);
    assert_eq!(map.method("onCreate"), "onCreate");
    assert_eq!(map.method("run"), "run");
    assert_ne!(map.class("Home"), "Home");
}

#[test]
fn rename_is_a_bijection() {
    let b = parse_bundle(SAMPLE).unwrap();
    for seed in 0..20 {
        let map = rename_map(&b, seed);
        let mut images: Vec<&str> = b.classes.iter().map(|c| map.class(&c.name)).collect();
        images.sort();
        images.dedup();
        assert_eq!(images.len(), b.classes.len());
        let o = apply_rename_obfuscation(&b, seed);
        assert!(validate(&o).is_empty(), "seed {seed}");
    }
}

fn arb_text() -> impl Strategy<Value = String> {
    prop::string::string_regex("[ -~\\\\\"]{0,12}").unwrap()
}

proptest! {
    #[test]
    fn constants_round_trip(values in prop::collection::vec(arb_text(), 1..6)) {
        let mut body = String::from("class A activity\n  method m\n");
        for (i, v) in values.iter().enumerate() {
            body += &format!("    %r{i} = const {}\n", serde_json::to_string(v).unwrap());
        }
        body += "  end\nend\n";
        let b = parse_bundle(&src(&body)).unwrap();
        let got: Vec<&str> = b.classes[0].methods[0].instructions.iter().map(|i| match i {
            Instruction::ConstText { value, .. } => value.as_str(),
            _ => unreachable!(),
        }).collect();
        prop_assert_eq!(got, values.iter().map(String::as_str).collect::<Vec<_>>());
        prop_assert_eq!(parse_bundle(&write_bundle(&b)).unwrap(), b);
    }

    #[test]
    fn rename_preserves_layout_shape(seed in any::<u64>()) {
        let b = parse_bundle(SAMPLE).unwrap();
        let o = apply_rename_obfuscation(&b, seed);
        for (l, m) in b.layouts.iter().zip(&o.layouts) {
            prop_assert_eq!(l.root.walk().len(), m.root.walk().len());
            prop_assert_eq!(l.root.depth(), m.root.depth());
        }
    }
}
