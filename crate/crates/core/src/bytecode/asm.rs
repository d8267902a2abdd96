//! Textual assembly for infusions (`.sasm`).
//!
//! ```text
//! ; comment
//! .statics ints=4 refs=2
//! .class Node parent=- ints=2 refs=1 final
//! .method main params=() ret=s locals_int=2 locals_ref=0
//!   sconst 1
//! loop:
//!   sload 0
//!   if_scmpgt loop
//!   sreturn
//! .end
//! .entry main
//! ```
//!
//! Freshly parsed methods use named labels; methods that have been through
//! the branch-target pass print explicit `brtarget N` instructions and
//! reference them as `@N`. Both forms parse, and `parse(print(x)) == x`
//! holds for both.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{
    BcError, BcInstr, ClassDef, CmpOp, Dt, ElemKind, Infusion, LoopInfo, LwKind, MethodDef,
    TagKind, ValueTag,
};

/// Parse a whole `.sasm` source into an infusion.
pub fn parse_assembly(text: &str) -> Result<Infusion, BcError> {
    Parser::new(text).parse()
}

struct RawMethod {
    def: MethodDef,
    /// (line number, text) for each body line, labels included.
    lines: Vec<(usize, String)>,
}

struct Parser<'a> {
    text: &'a str,
    statics_int: u16,
    statics_ref: u16,
    classes: Vec<ClassDef>,
    methods: Vec<RawMethod>,
    entry_name: Option<String>,
}

fn syntax(line: usize, msg: impl Into<String>) -> BcError {
    BcError::Syntax { line, msg: msg.into() }
}

fn parse_int(line: usize, s: &str) -> Result<i64, BcError> {
    let (neg, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let v = if let Some(hex) = rest.strip_prefix("0x") {
        i64::from_str_radix(hex, 16)
    } else {
        rest.parse::<i64>()
    }
    .map_err(|_| syntax(line, format!("bad number `{s}`")))?;
    Ok(if neg { -v } else { v })
}

/// `key=value` lookup within a directive's fields.
fn field<'a>(parts: &'a [&'a str], key: &str) -> Option<&'a str> {
    parts.iter().find_map(|p| p.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

fn parse_dt(line: usize, s: &str) -> Result<Dt, BcError> {
    match s {
        "s" => Ok(Dt::Short),
        "i" => Ok(Dt::Int),
        "a" => Ok(Dt::Ref),
        _ => Err(syntax(line, format!("bad type `{s}` (expected s, i or a)"))),
    }
}

fn parse_params(line: usize, s: &str) -> Result<Vec<Dt>, BcError> {
    let inner = s
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| syntax(line, "params must look like (s,i,a) or ()"))?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|p| parse_dt(line, p.trim())).collect()
}

fn parse_tag(line: usize, s: &str) -> Result<ValueTag, BcError> {
    let mut chars = s.chars();
    let kind = match chars.next() {
        Some('L') => TagKind::Local,
        Some('G') => TagKind::Static,
        Some('C') => TagKind::Constant,
        _ => return Err(syntax(line, format!("bad value tag `{s}`"))),
    };
    let dt = match chars.next() {
        Some('S') => Dt::Short,
        Some('I') => Dt::Int,
        Some('A') => Dt::Ref,
        _ => return Err(syntax(line, format!("bad value tag `{s}`"))),
    };
    let num = chars
        .as_str()
        .parse::<u16>()
        .map_err(|_| syntax(line, format!("bad value tag `{s}`")))?;
    Ok(ValueTag { kind, dt, num })
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Parser<'a> {
        Parser {
            text,
            statics_int: 0,
            statics_ref: 0,
            classes: Vec::new(),
            methods: Vec::new(),
            entry_name: None,
        }
    }

    fn parse(mut self) -> Result<Infusion, BcError> {
        self.collect()?;
        let class_names: Vec<String> = self.classes.iter().map(|c| c.name.clone()).collect();
        let method_names: Vec<String> = self.methods.iter().map(|m| m.def.name.clone()).collect();
        let mut methods = Vec::new();
        for raw in core::mem::take(&mut self.methods) {
            methods.push(parse_method_body(raw, &class_names, &method_names)?);
        }
        let entry = match &self.entry_name {
            Some(name) => method_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| BcError::UndefinedName { line: 0, name: name.clone() })?
                as u16,
            None => 0,
        };
        if methods.is_empty() {
            return Err(syntax(0, "no methods defined"));
        }
        Ok(Infusion {
            methods,
            statics_int_slots: self.statics_int,
            statics_ref_slots: self.statics_ref,
            classes: self.classes,
            entry,
        })
    }

    /// First pass: directives, class table, raw method bodies.
    fn collect(&mut self) -> Result<(), BcError> {
        let mut current: Option<RawMethod> = None;
        for (idx, raw_line) in self.text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw_line.split(';').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('.') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                match parts[0] {
                    "statics" => {
                        self.statics_int = field(&parts, "ints")
                            .map(|v| parse_int(lineno, v))
                            .transpose()?
                            .unwrap_or(0) as u16;
                        self.statics_ref = field(&parts, "refs")
                            .map(|v| parse_int(lineno, v))
                            .transpose()?
                            .unwrap_or(0) as u16;
                    }
                    "class" => {
                        let name = parts
                            .get(1)
                            .ok_or_else(|| syntax(lineno, ".class needs a name"))?
                            .to_string();
                        let parent = match field(&parts, "parent") {
                            None | Some("-") => None,
                            Some(p) => Some(
                                self.classes
                                    .iter()
                                    .position(|c| c.name == p)
                                    .ok_or_else(|| BcError::UndefinedName {
                                        line: lineno,
                                        name: p.to_string(),
                                    })? as u16,
                            ),
                        };
                        self.classes.push(ClassDef {
                            name,
                            parent,
                            int_field_slots: field(&parts, "ints")
                                .map(|v| parse_int(lineno, v))
                                .transpose()?
                                .unwrap_or(0) as u16,
                            ref_field_slots: field(&parts, "refs")
                                .map(|v| parse_int(lineno, v))
                                .transpose()?
                                .unwrap_or(0) as u16,
                            is_final: parts.contains(&"final"),
                        });
                    }
                    "method" | "lightweight" => {
                        if current.is_some() {
                            return Err(syntax(lineno, "missing .end before new method"));
                        }
                        let name = parts
                            .get(1)
                            .ok_or_else(|| syntax(lineno, "method needs a name"))?
                            .to_string();
                        if self.methods.iter().any(|m| m.def.name == name) {
                            return Err(BcError::DuplicateMethod { name });
                        }
                        let mut def = MethodDef::new(name);
                        def.lightweight = parts[0] == "lightweight";
                        if def.lightweight {
                            def.lw_kind = Some(match field(&parts, "kind") {
                                Some("converted") => LwKind::Converted,
                                Some("handwritten") | None => LwKind::Handwritten,
                                Some(k) => {
                                    return Err(syntax(lineno, format!("bad kind `{k}`")))
                                }
                            });
                        }
                        if let Some(p) = field(&parts, "params") {
                            def.params = parse_params(lineno, p)?;
                        }
                        def.ret = match field(&parts, "ret") {
                            None | Some("void") => None,
                            Some(r) => Some(parse_dt(lineno, r)?),
                        };
                        def.local_int_slots = field(&parts, "locals_int")
                            .map(|v| parse_int(lineno, v))
                            .transpose()?
                            .unwrap_or(0) as u16;
                        def.local_ref_slots = field(&parts, "locals_ref")
                            .map(|v| parse_int(lineno, v))
                            .transpose()?
                            .unwrap_or(0) as u16;
                        current = Some(RawMethod { def, lines: Vec::new() });
                    }
                    "end" => {
                        let m = current
                            .take()
                            .ok_or_else(|| syntax(lineno, ".end outside a method"))?;
                        self.methods.push(m);
                    }
                    "entry" => {
                        self.entry_name = Some(
                            parts
                                .get(1)
                                .ok_or_else(|| syntax(lineno, ".entry needs a name"))?
                                .to_string(),
                        );
                    }
                    other => return Err(syntax(lineno, format!("unknown directive .{other}"))),
                }
            } else {
                match &mut current {
                    Some(m) => m.lines.push((lineno, line.to_string())),
                    None => return Err(syntax(lineno, "instruction outside a method")),
                }
            }
        }
        if current.is_some() {
            return Err(syntax(self.text.lines().count(), "missing .end at end of file"));
        }
        Ok(())
    }
}

/// Branch operand: named label (label-form methods) or `@N` (brtarget form).
enum Target {
    Label(String),
    Id(u16),
}

fn parse_target(line: usize, s: &str) -> Result<Target, BcError> {
    if let Some(id) = s.strip_prefix('@') {
        Ok(Target::Id(
            id.parse().map_err(|_| syntax(line, format!("bad target `{s}`")))?,
        ))
    } else {
        Ok(Target::Label(s.to_string()))
    }
}

fn parse_method_body(
    raw: RawMethod,
    classes: &[String],
    methods: &[String],
) -> Result<MethodDef, BcError> {
    let mut def = raw.def;
    // Collect label definitions in order of appearance; ids follow that
    // order, so instruction indexes of successive labels are monotone.
    let mut label_names: Vec<String> = Vec::new();
    let mut label_pos: Vec<u16> = Vec::new();
    let mut instr_idx: u16 = 0;
    for (lineno, line) in &raw.lines {
        if let Some(name) = line.strip_suffix(':') {
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(syntax(*lineno, "bad label"));
            }
            if label_names.iter().any(|n| n == name) {
                return Err(syntax(*lineno, format!("duplicate label `{name}`")));
            }
            label_names.push(name.to_string());
            label_pos.push(instr_idx);
        } else {
            instr_idx += 1;
        }
    }

    let mut body = Vec::new();
    let mut targets: Vec<(usize, Target)> = Vec::new(); // (body index, target)
    let mut has_brtarget = false;
    let mut max_bt: u16 = 0;
    for (lineno, line) in &raw.lines {
        if line.ends_with(':') {
            continue;
        }
        let (instr, tgt) = parse_instruction(*lineno, line, classes, methods)?;
        if let Some(t) = tgt {
            targets.push((body.len(), t));
        }
        if let BcInstr::Brtarget(id) = instr {
            has_brtarget = true;
            max_bt = max_bt.max(id + 1);
        }
        body.push(instr);
    }

    let has_branches = !targets.is_empty();
    for (idx, tgt) in targets {
        let id = match tgt {
            Target::Id(id) => {
                if !has_brtarget {
                    return Err(BcError::Syntax {
                        line: 0,
                        msg: format!("`@{id}` target in a method without brtarget instructions"),
                    });
                }
                id
            }
            Target::Label(name) => {
                if has_brtarget {
                    return Err(BcError::Syntax {
                        line: 0,
                        msg: format!("label `{name}` used in a brtarget-form method"),
                    });
                }
                label_names
                    .iter()
                    .position(|n| *n == name)
                    .ok_or(BcError::UndefinedLabel { line: 0, label: name })? as u16
            }
        };
        body[idx].set_branch_target(id);
    }

    def.body = body;
    // A body without any branches is trivially in resolved form; this
    // keeps branchless methods resolved across a print/parse round trip.
    def.targets_resolved = has_brtarget || !has_branches;
    def.brtarget_count = max_bt;
    def.labels = if has_brtarget { Vec::new() } else { label_pos };
    Ok(def)
}

fn lookup(line: usize, names: &[String], name: &str) -> Result<u16, BcError> {
    names
        .iter()
        .position(|n| n == name)
        .map(|i| i as u16)
        .ok_or(BcError::UndefinedName { line, name: name.to_string() })
}

/// `Class.N` field reference.
fn parse_field_ref(line: usize, classes: &[String], s: &str) -> Result<(u16, u16), BcError> {
    let (cls, slot) = s
        .split_once('.')
        .ok_or_else(|| syntax(line, format!("field reference `{s}` must be Class.slot")))?;
    Ok((lookup(line, classes, cls)?, parse_int(line, slot)? as u16))
}

fn parse_tag_list(line: usize, s: &str) -> Result<Vec<ValueTag>, BcError> {
    if s.is_empty() || s == "-" {
        return Ok(Vec::new());
    }
    s.split(',').map(|t| parse_tag(line, t)).collect()
}

fn parse_instruction(
    line: usize,
    text: &str,
    classes: &[String],
    methods: &[String],
) -> Result<(BcInstr, Option<Target>), BcError> {
    let mut it = text.split_whitespace();
    let mn = it.next().unwrap();
    let args: Vec<&str> = it.collect();
    let arg = |i: usize| -> Result<&str, BcError> {
        args.get(i).copied().ok_or_else(|| syntax(line, format!("{mn}: missing operand")))
    };
    let num = |i: usize| -> Result<i64, BcError> { parse_int(line, arg(i)?) };
    use BcInstr::*;
    let mut target = None;
    let instr = match mn {
        "sload" => Sload(num(0)? as u16),
        "iload" => Iload(num(0)? as u16),
        "aload" => Aload(num(0)? as u16),
        "sstore" => Sstore(num(0)? as u16),
        "istore" => Istore(num(0)? as u16),
        "astore" => Astore(num(0)? as u16),
        "sconst" | "bipush" | "sipush" => Sconst(num(0)? as i16),
        "iconst" => Iconst(num(0)? as i32),
        "sadd" => Sadd,
        "ssub" => Ssub,
        "smul" => Smul,
        "sdiv" => Sdiv,
        "sneg" => Sneg,
        "iadd" => Iadd,
        "isub" => Isub,
        "imul" => Imul,
        "idiv" => Idiv,
        "ineg" => Ineg,
        "sinc" => Sinc(num(0)? as u16, num(1)? as i16),
        "iinc" => Iinc(num(0)? as u16, num(1)? as i16),
        "sand" => Sand,
        "sor" => Sor,
        "sxor" => Sxor,
        "iand" => Iand,
        "ior" => Ior,
        "ixor" => Ixor,
        "sshl" => Sshl,
        "sshr" => Sshr,
        "sushr" => Sushr,
        "ishl" => Ishl,
        "ishr" => Ishr,
        "iushr" => Iushr,
        "sshl_const" => SshlC(num(0)? as u8),
        "sshr_const" => SshrC(num(0)? as u8),
        "sushr_const" => SushrC(num(0)? as u8),
        "ishl_const" => IshlC(num(0)? as u8),
        "ishr_const" => IshrC(num(0)? as u8),
        "iushr_const" => IushrC(num(0)? as u8),
        "s2i" => S2i,
        "i2s" => I2s,
        "arraylength" => ArrayLength,
        "simul" => Simul,
        "goto" => {
            target = Some(parse_target(line, arg(0)?)?);
            Goto(0)
        }
        "brtarget" => Brtarget(num(0)? as u16),
        "markloop_end" => MarkloopEnd,
        "markloop_begin" => {
            let mut info = LoopInfo::default();
            for a in &args {
                if let Some(ts) = a.strip_prefix("tags=") {
                    if ts != "-" && !ts.is_empty() {
                        for t in ts.split(',') {
                            let (tag, freq) = t
                                .split_once(':')
                                .ok_or_else(|| syntax(line, "tags must be TAG:FREQ"))?;
                            info.tags.push((
                                parse_tag(line, tag)?,
                                freq.parse()
                                    .map_err(|_| syntax(line, format!("bad frequency `{freq}`")))?,
                            ));
                        }
                    }
                } else if let Some(ts) = a.strip_prefix("in=") {
                    info.live_at_entry = parse_tag_list(line, ts)?;
                } else if let Some(ts) = a.strip_prefix("out=") {
                    info.live_at_exit = parse_tag_list(line, ts)?;
                } else {
                    return Err(syntax(line, format!("bad markloop field `{a}`")));
                }
            }
            MarkloopBegin(Box::new(info))
        }
        "lw_parameter" => LwParameter(parse_dt(line, arg(0)?)?),
        "invokestatic" => Invokestatic(lookup(line, methods, arg(0)?)?),
        "invokelight" => Invokelight(lookup(line, methods, arg(0)?)?),
        "sreturn" => Sreturn,
        "ireturn" => Ireturn,
        "areturn" => Areturn,
        "return" => Return,
        "new" => New(lookup(line, classes, arg(0)?)?),
        "newarray" => {
            let k = arg(0)?;
            let kind = k
                .chars()
                .next()
                .and_then(ElemKind::from_letter)
                .filter(|_| k.len() == 1)
                .ok_or_else(|| syntax(line, format!("bad element kind `{k}`")))?;
            Newarray(kind)
        }
        "getfield_a_fixed" => GetfieldAFixed { off: num(0)? as u16 },
        "putfield_a_fixed" => PutfieldAFixed { off: num(0)? as u16 },
        _ => {
            // Families with an embedded type/compare suffix.
            if let Some(rest) = mn.strip_prefix("if_scmp") {
                let op = CmpOp::from_name(rest)
                    .ok_or_else(|| syntax(line, format!("bad compare `{mn}`")))?;
                target = Some(parse_target(line, arg(0)?)?);
                IfScmp(op, 0)
            } else if let Some(rest) = mn.strip_prefix("if_icmp") {
                let op = CmpOp::from_name(rest)
                    .ok_or_else(|| syntax(line, format!("bad compare `{mn}`")))?;
                target = Some(parse_target(line, arg(0)?)?);
                IfIcmp(op, 0)
            } else if let Some(rest) = mn.strip_prefix("if") {
                let op = CmpOp::from_name(rest)
                    .ok_or_else(|| syntax(line, format!("bad compare `{mn}`")))?;
                target = Some(parse_target(line, arg(0)?)?);
                If0(op, 0)
            } else if let Some(rest) = mn.strip_prefix("getfield_") {
                let (class, slot) = parse_field_ref(line, classes, arg(0)?)?;
                match rest {
                    "s" => GetfieldS { class, slot },
                    "i" => GetfieldI { class, slot },
                    "a" => GetfieldA { class, slot },
                    _ => return Err(syntax(line, format!("unknown instruction `{mn}`"))),
                }
            } else if let Some(rest) = mn.strip_prefix("putfield_") {
                let (class, slot) = parse_field_ref(line, classes, arg(0)?)?;
                match rest {
                    "s" => PutfieldS { class, slot },
                    "i" => PutfieldI { class, slot },
                    "a" => PutfieldA { class, slot },
                    _ => return Err(syntax(line, format!("unknown instruction `{mn}`"))),
                }
            } else if let Some(rest) = mn.strip_prefix("getstatic_") {
                match rest {
                    "s" => GetstaticS(num(0)? as u16),
                    "i" => GetstaticI(num(0)? as u16),
                    "a" => GetstaticA(num(0)? as u16),
                    _ => return Err(syntax(line, format!("unknown instruction `{mn}`"))),
                }
            } else if let Some(rest) = mn.strip_prefix("putstatic_") {
                match rest {
                    "s" => PutstaticS(num(0)? as u16),
                    "i" => PutstaticI(num(0)? as u16),
                    "a" => PutstaticA(num(0)? as u16),
                    _ => return Err(syntax(line, format!("unknown instruction `{mn}`"))),
                }
            } else if let Some(k) = parse_array_mnemonic(mn, "aload") {
                ArrLoad { kind: k.0, wide_index: k.1 }
            } else if let Some(k) = parse_array_mnemonic(mn, "astore") {
                ArrStore { kind: k.0, wide_index: k.1 }
            } else {
                return Err(syntax(line, format!("unknown instruction `{mn}`")));
            }
        }
    };
    Ok((instr, target))
}

/// `saload` (wide 32-bit index) or `saload16` (narrowed 16-bit index).
fn parse_array_mnemonic(mn: &str, suffix: &str) -> Option<(ElemKind, bool)> {
    let kind = ElemKind::from_letter(mn.chars().next()?)?;
    let rest = &mn[1..];
    if rest == suffix {
        Some((kind, true))
    } else if let Some(r) = rest.strip_suffix("16") {
        (r == suffix).then_some((kind, false))
    } else {
        None
    }
}

/// Print an infusion back to assembly. `parse_assembly(print_infusion(x))`
/// reproduces `x` for both label-form and brtarget-form methods.
pub fn print_infusion(inf: &Infusion) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        ".statics ints={} refs={}\n",
        inf.statics_int_slots, inf.statics_ref_slots
    ));
    for c in &inf.classes {
        let parent = match c.parent {
            Some(p) => inf.classes[p as usize].name.clone(),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            ".class {} parent={} ints={} refs={}{}\n",
            c.name,
            parent,
            c.int_field_slots,
            c.ref_field_slots,
            if c.is_final { " final" } else { "" }
        ));
    }
    for m in &inf.methods {
        print_method(&mut out, inf, m);
    }
    out.push_str(&format!(".entry {}\n", inf.methods[inf.entry as usize].name));
    out
}

fn dt_letter(d: Dt) -> &'static str {
    match d {
        Dt::Short => "s",
        Dt::Int => "i",
        Dt::Ref => "a",
    }
}

fn print_method(out: &mut String, inf: &Infusion, m: &MethodDef) {
    let params: Vec<&str> = m.params.iter().map(|d| dt_letter(*d)).collect();
    let kind = match m.lw_kind {
        Some(LwKind::Converted) => " kind=converted",
        Some(LwKind::Handwritten) => " kind=handwritten",
        None => "",
    };
    out.push_str(&format!(
        ".{} {} params=({}) ret={}{} locals_int={} locals_ref={}\n",
        if m.lightweight { "lightweight" } else { "method" },
        m.name,
        params.join(","),
        m.ret.map_or("void", dt_letter),
        kind,
        m.local_int_slots,
        m.local_ref_slots,
    ));
    for (idx, instr) in m.body.iter().enumerate() {
        if !m.targets_resolved {
            for (id, pos) in m.labels.iter().enumerate() {
                if *pos as usize == idx {
                    out.push_str(&format!("L{id}:\n"));
                }
            }
        }
        out.push_str("  ");
        out.push_str(&print_instruction(inf, m, instr));
        out.push('\n');
    }
    if !m.targets_resolved {
        // labels pointing one past the last instruction
        for (id, pos) in m.labels.iter().enumerate() {
            if *pos as usize == m.body.len() {
                out.push_str(&format!("L{id}:\n"));
            }
        }
    }
    out.push_str(".end\n");
}

fn tgt(m: &MethodDef, t: u16) -> String {
    if m.targets_resolved {
        format!("@{t}")
    } else {
        format!("L{t}")
    }
}

fn tag_list(tags: &[ValueTag]) -> String {
    if tags.is_empty() {
        return "-".to_string();
    }
    let parts: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
    parts.join(",")
}

fn print_instruction(inf: &Infusion, m: &MethodDef, i: &BcInstr) -> String {
    use BcInstr::*;
    let fld = |c: &u16, s: &u16| format!("{}.{}", inf.classes[*c as usize].name, s);
    match i {
        Sload(n) => format!("sload {n}"),
        Iload(n) => format!("iload {n}"),
        Aload(n) => format!("aload {n}"),
        Sstore(n) => format!("sstore {n}"),
        Istore(n) => format!("istore {n}"),
        Astore(n) => format!("astore {n}"),
        Sconst(k) => format!("sconst {k}"),
        Iconst(k) => format!("iconst {k}"),
        Sadd => "sadd".into(),
        Ssub => "ssub".into(),
        Smul => "smul".into(),
        Sdiv => "sdiv".into(),
        Sneg => "sneg".into(),
        Iadd => "iadd".into(),
        Isub => "isub".into(),
        Imul => "imul".into(),
        Idiv => "idiv".into(),
        Ineg => "ineg".into(),
        Sinc(n, k) => format!("sinc {n} {k}"),
        Iinc(n, k) => format!("iinc {n} {k}"),
        Sand => "sand".into(),
        Sor => "sor".into(),
        Sxor => "sxor".into(),
        Iand => "iand".into(),
        Ior => "ior".into(),
        Ixor => "ixor".into(),
        Sshl => "sshl".into(),
        Sshr => "sshr".into(),
        Sushr => "sushr".into(),
        Ishl => "ishl".into(),
        Ishr => "ishr".into(),
        Iushr => "iushr".into(),
        SshlC(k) => format!("sshl_const {k}"),
        SshrC(k) => format!("sshr_const {k}"),
        SushrC(k) => format!("sushr_const {k}"),
        IshlC(k) => format!("ishl_const {k}"),
        IshrC(k) => format!("ishr_const {k}"),
        IushrC(k) => format!("iushr_const {k}"),
        S2i => "s2i".into(),
        I2s => "i2s".into(),
        ArrLoad { kind, wide_index } => {
            format!("{}aload{}", kind.letter(), if *wide_index { "" } else { "16" })
        }
        ArrStore { kind, wide_index } => {
            format!("{}astore{}", kind.letter(), if *wide_index { "" } else { "16" })
        }
        ArrayLength => "arraylength".into(),
        GetfieldS { class, slot } => format!("getfield_s {}", fld(class, slot)),
        GetfieldI { class, slot } => format!("getfield_i {}", fld(class, slot)),
        GetfieldA { class, slot } => format!("getfield_a {}", fld(class, slot)),
        PutfieldS { class, slot } => format!("putfield_s {}", fld(class, slot)),
        PutfieldI { class, slot } => format!("putfield_i {}", fld(class, slot)),
        PutfieldA { class, slot } => format!("putfield_a {}", fld(class, slot)),
        GetfieldAFixed { off } => format!("getfield_a_fixed {off}"),
        PutfieldAFixed { off } => format!("putfield_a_fixed {off}"),
        GetstaticS(n) => format!("getstatic_s {n}"),
        GetstaticI(n) => format!("getstatic_i {n}"),
        GetstaticA(n) => format!("getstatic_a {n}"),
        PutstaticS(n) => format!("putstatic_s {n}"),
        PutstaticI(n) => format!("putstatic_i {n}"),
        PutstaticA(n) => format!("putstatic_a {n}"),
        Simul => "simul".into(),
        IfScmp(op, t) => format!("if_scmp{} {}", op.name(), tgt(m, *t)),
        IfIcmp(op, t) => format!("if_icmp{} {}", op.name(), tgt(m, *t)),
        If0(op, t) => format!("if{} {}", op.name(), tgt(m, *t)),
        Goto(t) => format!("goto {}", tgt(m, *t)),
        Brtarget(id) => format!("brtarget {id}"),
        MarkloopBegin(info) => {
            let tags: Vec<String> =
                info.tags.iter().map(|(t, f)| format!("{t}:{f}")).collect();
            format!(
                "markloop_begin tags={} in={} out={}",
                if tags.is_empty() { "-".to_string() } else { tags.join(",") },
                tag_list(&info.live_at_entry),
                tag_list(&info.live_at_exit),
            )
        }
        MarkloopEnd => "markloop_end".into(),
        LwParameter(d) => format!("lw_parameter {}", dt_letter(*d)),
        Invokestatic(mi) => format!("invokestatic {}", inf.methods[*mi as usize].name),
        Invokelight(mi) => format!("invokelight {}", inf.methods[*mi as usize].name),
        Sreturn => "sreturn".into(),
        Ireturn => "ireturn".into(),
        Areturn => "areturn".into(),
        Return => "return".into(),
        New(c) => format!("new {}", inf.classes[*c as usize].name),
        Newarray(k) => format!("newarray {}", k.letter()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1_LOOP: &str = "
.method main params=() ret=s locals_int=3 locals_ref=0
loop:
  sload 0
  sconst 1
  sushr
  sstore 0
  sload 0
  sload 1
  if_scmpgt loop
  sreturn
.end
";

    #[test]
    fn parses_the_shift_loop() {
        let inf = parse_assembly(TABLE1_LOOP).unwrap();
        assert_eq!(inf.methods.len(), 1);
        let m = &inf.methods[0];
        assert_eq!(m.body.len(), 8);
        assert!(!m.targets_resolved);
        assert_eq!(m.labels, alloc::vec![0]);
        assert_eq!(m.body[6], BcInstr::IfScmp(CmpOp::Gt, 0));
    }

    #[test]
    fn empty_method_parses() {
        let inf = parse_assembly(".method f params=() ret=void\n  return\n.end\n").unwrap();
        assert_eq!(inf.methods[0].body, alloc::vec![BcInstr::Return]);
    }

    #[test]
    fn undefined_label_is_an_error() {
        let src = ".method f params=() ret=void\n  goto nowhere\n  return\n.end\n";
        match parse_assembly(src) {
            Err(BcError::UndefinedLabel { label, .. }) => assert_eq!(label, "nowhere"),
            other => panic!("expected undefined label, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_method_is_an_error() {
        let src = "\
.method f params=() ret=void\n  return\n.end\n\
.method f params=() ret=void\n  return\n.end\n";
        assert!(matches!(parse_assembly(src), Err(BcError::DuplicateMethod { .. })));
    }

    #[test]
    fn assembly_round_trip_label_form() {
        let inf = parse_assembly(TABLE1_LOOP).unwrap();
        let printed = print_infusion(&inf);
        let back = parse_assembly(&printed).unwrap();
        assert_eq!(back, inf);
    }

    #[test]
    fn assembly_round_trip_brtarget_form() {
        let src = "
.statics ints=2 refs=1
.class Node parent=- ints=1 refs=1 final
.lightweight lw params=(s) ret=s kind=handwritten locals_int=0 locals_ref=0
  lw_parameter s
  sconst 1
  sand
  sreturn
.end
.method main params=() ret=s locals_int=2 locals_ref=1
  brtarget 0
  sload 0
  sushr_const 1
  sstore 0
  markloop_begin tags=LS0:3,LS1:1 in=LS0,LS1 out=LS0
  sload 1
  markloop_end
  if_scmpgt @0
  iconst 70000
  i2s
  invokelight lw
  getstatic_s 1
  saload16
  sreturn
.end
.entry main
";
        let inf = parse_assembly(src).unwrap();
        assert!(inf.methods[1].targets_resolved);
        assert_eq!(inf.methods[1].brtarget_count, 1);
        let printed = print_infusion(&inf);
        let back = parse_assembly(&printed).unwrap();
        assert_eq!(back, inf);
    }
}
