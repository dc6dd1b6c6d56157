//! In-memory representation of an App-IR bundle.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Resource ids that resolve against the manifest instead of the string table.
pub const MANIFEST_PACKAGE_RESOURCE: &str = "manifest.package_name";
pub const MANIFEST_APP_NAME_RESOURCE: &str = "manifest.app_name";

/// A method-local register, written `%name` in the concrete syntax.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Reg(pub String);

impl Reg {
    pub fn new(name: impl Into<String>) -> Self {
        Reg(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// `Class.method`, the unit of the call graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MethodRef {
    pub class: String,
    pub method: String,
}

impl MethodRef {
    pub fn new(class: impl Into<String>, method: impl Into<String>) -> Self {
        MethodRef {
            class: class.into(),
            method: method.into(),
        }
    }
}

impl fmt::Display for MethodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.class, self.method)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppBundle {
    pub manifest: ManifestInfo,
    pub layouts: Vec<LayoutResource>,
    pub string_resources: BTreeMap<String, String>,
    pub nav_graphs: Vec<NavGraphResource>,
    pub classes: Vec<AppClass>,
}

impl AppBundle {
    pub fn class(&self, name: &str) -> Option<&AppClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn method(&self, m: &MethodRef) -> Option<&MethodIR> {
        self.class(&m.class)?.method(&m.method)
    }

    pub fn layout(&self, id: &str) -> Option<&LayoutResource> {
        self.layouts.iter().find(|l| l.id == id)
    }

    pub fn is_ui_class(&self, name: &str) -> bool {
        self.class(name).is_some_and(|c| c.kind.is_ui())
    }

    /// Resolves a `ResourceText` id to its concrete text.
    pub fn resource_text(&self, id: &str) -> Option<&str> {
        match id {
            MANIFEST_PACKAGE_RESOURCE => Some(&self.manifest.package_name),
            MANIFEST_APP_NAME_RESOURCE => Some(&self.manifest.app_name),
            _ => self.string_resources.get(id).map(String::as_str),
        }
    }

    pub fn method_count(&self) -> usize {
        self.classes.iter().map(|c| c.methods.len()).sum()
    }

    pub fn instruction_count(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|c| &c.methods)
            .map(|m| m.instructions.len())
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub package_name: String,
    pub app_name: String,
    pub cert_digest: String,
    #[serde(default)]
    pub permissions: BTreeSet<String>,
    #[serde(default)]
    pub declared_activities: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutResource {
    pub id: String,
    pub root: WidgetNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidgetNode {
    #[serde(rename = "type")]
    pub widget_type: String,
    #[serde(default, rename = "id", skip_serializing_if = "Option::is_none")]
    pub widget_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icon: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub listeners: BTreeSet<ListenerKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<WidgetNode>,
}

impl WidgetNode {
    pub fn leaf(widget_type: impl Into<String>) -> Self {
        WidgetNode {
            widget_type: widget_type.into(),
            widget_id: None,
            icon: None,
            listeners: BTreeSet::new(),
            children: Vec::new(),
        }
    }

    /// Pre-order walk over the subtree.
    pub fn walk(&self) -> Vec<&WidgetNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// Depth of the tree; a lone root has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(WidgetNode::depth).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ListenerKind {
    OnClick,
    OnLongClick,
    OnKeyDown,
    Custom,
}

impl ListenerKind {
    pub const ALL: [ListenerKind; 4] = [
        ListenerKind::OnClick,
        ListenerKind::OnLongClick,
        ListenerKind::OnKeyDown,
        ListenerKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ListenerKind::OnClick => "OnClick",
            ListenerKind::OnLongClick => "OnLongClick",
            ListenerKind::OnKeyDown => "OnKeyDown",
            ListenerKind::Custom => "Custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavGraphResource {
    pub id: String,
    #[serde(rename = "host")]
    pub host_class: String,
    pub destinations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Activity,
    Fragment,
    Listener,
    Plain,
}

impl ClassKind {
    pub fn is_ui(self) -> bool {
        matches!(self, ClassKind::Activity | ClassKind::Fragment)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ClassKind::Activity => "activity",
            ClassKind::Fragment => "fragment",
            ClassKind::Listener => "listener",
            ClassKind::Plain => "plain",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "activity" => ClassKind::Activity,
            "fragment" => ClassKind::Fragment,
            "listener" => ClassKind::Listener,
            "plain" => ClassKind::Plain,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppClass {
    pub name: String,
    pub kind: ClassKind,
    pub inner_of: Option<String>,
    pub methods: Vec<MethodIR>,
    pub overrides_system_listener: BTreeSet<String>,
}

impl AppClass {
    pub fn new(name: impl Into<String>, kind: ClassKind) -> Self {
        AppClass {
            name: name.into(),
            kind,
            inner_of: None,
            methods: Vec::new(),
            overrides_system_listener: BTreeSet::new(),
        }
    }

    pub fn method(&self, name: &str) -> Option<&MethodIR> {
        self.methods.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodIR {
    pub name: String,
    pub params: Vec<Reg>,
    pub instructions: Vec<Instruction>,
}

impl MethodIR {
    pub fn new(name: impl Into<String>) -> Self {
        MethodIR {
            name: name.into(),
            params: Vec::new(),
            instructions: Vec::new(),
        }
    }

    /// Parameter list as written in the method header, e.g. `(%a, %b)`.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self.params.iter().map(Reg::to_string).collect();
        format!("({})", params.join(", "))
    }

    /// Index of the last instruction before `before` that defines `reg`.
    pub fn reaching_def(&self, reg: &Reg, before: usize) -> Option<usize> {
        let end = before.min(self.instructions.len());
        (0..end)
            .rev()
            .find(|&i| self.instructions[i].def() == Some(reg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TextOpKind {
    Append,
    Assign,
    Replace,
    Concat,
}

impl TextOpKind {
    pub fn keyword(self) -> &'static str {
        match self {
            TextOpKind::Append => "append",
            TextOpKind::Assign => "assign",
            TextOpKind::Replace => "replace",
            TextOpKind::Concat => "concat",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "append" => TextOpKind::Append,
            "assign" => TextOpKind::Assign,
            "replace" => TextOpKind::Replace,
            "concat" => TextOpKind::Concat,
            _ => return None,
        })
    }

    /// `None` means "one or more".
    pub fn arity(self) -> Option<usize> {
        match self {
            TextOpKind::Append => Some(2),
            TextOpKind::Assign => Some(1),
            TextOpKind::Replace => Some(3),
            TextOpKind::Concat => None,
        }
    }

    /// Operand positions whose content ends up in the result. The search
    /// pattern of `replace` (position 1) is consumed, not copied.
    pub fn data_operands(self, operands: &[Reg]) -> Vec<&Reg> {
        match self {
            TextOpKind::Replace => operands
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != 1)
                .map(|(_, r)| r)
                .collect(),
            _ => operands.iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartTarget {
    Class(String),
    Intent(Reg),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApiCall {
    SetContentView { layout: String },
    Inflate { layout: String },
    FindViewById { widget: String },
    NewWidget { widget_type: String },
    AttachWidget { parent: Reg, child: Reg },
    LoadUrl { url: Reg },
    StartActivity { target: StartTarget },
    StartActivityForResult { target: StartTarget },
    NewIntent { target: String },
    NavNavigate { destination: String },
    SetOnClickListener { widget: Reg, listener: String },
    ThreadStart { class: String },
    AsyncExecute { class: String },
    SendMessage { class: String },
}

impl ApiCall {
    pub fn keyword(&self) -> &'static str {
        match self {
            ApiCall::SetContentView { .. } => "set_content_view",
            ApiCall::Inflate { .. } => "inflate",
            ApiCall::FindViewById { .. } => "find_view_by_id",
            ApiCall::NewWidget { .. } => "new_widget",
            ApiCall::AttachWidget { .. } => "attach_widget",
            ApiCall::LoadUrl { .. } => "load_url",
            ApiCall::StartActivity { .. } => "start_activity",
            ApiCall::StartActivityForResult { .. } => "start_activity_for_result",
            ApiCall::NewIntent { .. } => "new_intent",
            ApiCall::NavNavigate { .. } => "nav_navigate",
            ApiCall::SetOnClickListener { .. } => "set_on_click_listener",
            ApiCall::ThreadStart { .. } => "thread_start",
            ApiCall::AsyncExecute { .. } => "async_execute",
            ApiCall::SendMessage { .. } => "send_message",
        }
    }

    /// Whether the API produces a value that may be bound to a register.
    pub fn returns_value(&self) -> bool {
        matches!(
            self,
            ApiCall::Inflate { .. }
                | ApiCall::FindViewById { .. }
                | ApiCall::NewWidget { .. }
                | ApiCall::NewIntent { .. }
        )
    }

    /// Registers read by this call.
    pub fn uses(&self) -> Vec<&Reg> {
        match self {
            ApiCall::AttachWidget { parent, child } => vec![parent, child],
            ApiCall::LoadUrl { url } => vec![url],
            ApiCall::StartActivity {
                target: StartTarget::Intent(r),
            }
            | ApiCall::StartActivityForResult {
                target: StartTarget::Intent(r),
            } => vec![r],
            ApiCall::SetOnClickListener { widget, .. } => vec![widget],
            _ => Vec::new(),
        }
    }

    /// Class names referenced by this call.
    pub fn class_refs(&self) -> Vec<&str> {
        match self {
            ApiCall::StartActivity {
                target: StartTarget::Class(c),
            }
            | ApiCall::StartActivityForResult {
                target: StartTarget::Class(c),
            }
            | ApiCall::NewIntent { target: c }
            | ApiCall::NavNavigate { destination: c }
            | ApiCall::SetOnClickListener { listener: c, .. }
            | ApiCall::ThreadStart { class: c }
            | ApiCall::AsyncExecute { class: c }
            | ApiCall::SendMessage { class: c } => vec![c.as_str()],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instruction {
    ConstText {
        dst: Reg,
        value: String,
    },
    ResourceText {
        dst: Reg,
        resource: String,
    },
    /// A value only known at runtime (user input, network response).
    RuntimeText {
        dst: Reg,
    },
    TextOp {
        dst: Reg,
        op: TextOpKind,
        operands: Vec<Reg>,
    },
    Call {
        dst: Option<Reg>,
        target: MethodRef,
        args: Vec<Reg>,
    },
    Api {
        dst: Option<Reg>,
        call: ApiCall,
    },
    Return {
        value: Option<Reg>,
    },
}

impl Instruction {
    pub fn def(&self) -> Option<&Reg> {
        match self {
            Instruction::ConstText { dst, .. }
            | Instruction::ResourceText { dst, .. }
            | Instruction::RuntimeText { dst }
            | Instruction::TextOp { dst, .. } => Some(dst),
            Instruction::Call { dst, .. } | Instruction::Api { dst, .. } => dst.as_ref(),
            Instruction::Return { .. } => None,
        }
    }

    pub fn uses(&self) -> Vec<&Reg> {
        match self {
            Instruction::TextOp { operands, .. } => operands.iter().collect(),
            Instruction::Call { args, .. } => args.iter().collect(),
            Instruction::Api { call, .. } => call.uses(),
            Instruction::Return { value } => value.iter().collect(),
            _ => Vec::new(),
        }
    }

    pub fn api(&self) -> Option<&ApiCall> {
        match self {
            Instruction::Api { call, .. } => Some(call),
            _ => None,
        }
    }
}
