use proptest::prelude::*;
use uedetect_core::app_ir::{
    ApiCall, AppBundle, AppClass, ClassKind, Instruction, MethodIR, MethodRef,
};
use uedetect_core::callgraph::{
    build_call_graph, build_call_graph_with, reachable_methods, EdgeKind, ImplicitPairTable,
};

/// One start site per API kind, aimed at class `T`, and an arbitrary subset
/// of the run methods defined on `T`.
fn bundle(site: usize, defined: &[bool; 6]) -> AppBundle {
    let run_names = ["run", "onPreExecute", "doInBackground", "doPostExecute", "onClick", "handleMessage"];
    let call = match site {
        0 => ApiCall::ThreadStart { class: "T".into() },
        1 => ApiCall::AsyncExecute { class: "T".into() },
        2 => ApiCall::SendMessage { class: "T".into() },
        _ => ApiCall::SetOnClickListener {
            widget: uedetect_core::app_ir::Reg::new("w"),
            listener: "T".into(),
        },
    };
    let mut caller = MethodIR::new("go");
    caller.params.push(uedetect_core::app_ir::Reg::new("w"));
    caller.instructions.push(Instruction::Api { dst: None, call });
    let mut a = AppClass::new("A", ClassKind::Activity);
    a.methods.push(caller);
    let mut t = AppClass::new("T", ClassKind::Plain);
    for (name, &d) in run_names.iter().zip(defined) {
        if d {
            t.methods.push(MethodIR::new(*name));
        }
    }
    AppBundle {
        classes: vec![a, t],
        ..AppBundle::default()
    }
}

fn implicit(b: &AppBundle) -> Vec<(String, String)> {
    build_call_graph(b)
        .implicit_edges()
        .map(|e| (e.caller.to_string(), e.callee.to_string()))
        .collect()
}

fn expected(site: usize, d: &[bool; 6]) -> Vec<(String, String)> {
    let pair = |a: &str, b: &str| (a.to_string(), b.to_string());
    let mut out = Vec::new();
    match site {
        0 if d[0] => out.push(pair("A.go", "T.run")),
        1 => {
            if d[1] {
                out.push(pair("A.go", "T.onPreExecute"));
            }
            if d[1] && d[2] {
                out.push(pair("T.onPreExecute", "T.doInBackground"));
            }
            if d[2] && d[3] {
                out.push(pair("T.doInBackground", "T.doPostExecute"));
            }
        }
        2 if d[5] => out.push(pair("A.go", "T.handleMessage")),
        3 if d[4] => out.push(pair("A.go", "T.onClick")),
        _ => {}
    }
    out.sort();
    out
}

proptest! {
    #[test]
    fn implicit_edges_iff_start_and_run_exist(site in 0..4usize, defined in any::<[bool; 6]>()) {
        let b = bundle(site, &defined);
        let mut got = implicit(&b);
        got.sort();
        prop_assert_eq!(got, expected(site, &defined));
    }

    #[test]
    fn reachability_is_monotone_in_depth(n in 1..20usize, d in 0..20usize) {
        let mut c = AppClass::new("C", ClassKind::Plain);
        for i in 0..n {
            let mut m = MethodIR::new(format!("m{i}"));
            if i + 1 < n {
                m.instructions.push(Instruction::Call {
                    dst: None,
                    target: MethodRef::new("C", format!("m{}", i + 1)),
                    args: vec![],
                });
            }
            c.methods.push(m);
        }
        let b = AppBundle { classes: vec![c], ..AppBundle::default() };
        let cg = build_call_graph(&b);
        let from = MethodRef::new("C", "m0");
        let small = reachable_methods(&cg, &from, d).unwrap();
        let big = reachable_methods(&cg, &from, d + 1).unwrap();
        prop_assert!(small.is_subset(&big));
        prop_assert_eq!(small.len(), (d + 1).min(n));
    }
}

#[test]
fn table_is_configurable() {
    let table = ImplicitPairTable::from_toml_str(
        "[[rows]]\ntop_class = \"AsyncTask\"\nrun_method = \"onPostExecute\"\nstart_method = \"execute\"\n",
    )
    .unwrap();
    let mut b = bundle(1, &[false; 6]);
    b.classes[1].methods.push(MethodIR::new("onPostExecute"));
    let cg = build_call_graph_with(&b, &table);
    let e: Vec<_> = cg.edges.iter().collect();
    assert_eq!(e.len(), 1);
    assert_eq!(e[0].callee, MethodRef::new("T", "onPostExecute"));
    assert_eq!(e[0].kind, EdgeKind::Implicit);
    assert!(ImplicitPairTable::from_toml_str("rows = []").is_err());
}

#[test]
fn unknown_start_method_is_an_error() {
    let b = bundle(0, &[true; 6]);
    let cg = build_call_graph(&b);
    assert!(reachable_methods(&cg, &MethodRef::new("Z", "z"), 3).is_err());
    let r = reachable_methods(&cg, &MethodRef::new("A", "go"), 0).unwrap();
    assert_eq!(r.len(), 1);
    assert!(cg.to_edge_list().contains("A.go -> T.run"));
}
