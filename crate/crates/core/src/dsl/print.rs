use std::fmt::Write;

use super::{
    Atom, AugmentBinding, ClassOperand, ConfigEntry, Literal, MappingExpr, Predicate, WarehouseDef,
};
use crate::property::PropertyKind;
use crate::source::relation_target_text;

fn literal(l: &Literal) -> String {
    match l {
        Literal::Str(s) => {
            let mut out = String::from("\"");
            for ch in s.chars() {
                match ch {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
            out
        }
        Literal::Int(i) => i.to_string(),
        Literal::Float(x) => {
            let s = x.to_string();
            if s.contains('.') {
                s
            } else {
                format!("{s}.0")
            }
        }
    }
}

pub fn print_predicate(p: &Predicate) -> String {
    if p.0.is_empty() {
        return "true".into();
    }
    let atoms: Vec<String> =
        p.0.iter()
            .map(|a| match a {
                Atom::Compare {
                    path,
                    op,
                    literal: l,
                } => {
                    format!("{path} {} {}", op.symbol(), literal(l))
                }
                Atom::Contains { path, binder } => format!("{path} ∋ {binder}"),
            })
            .collect();
    atoms.join(" and ")
}

fn operand(o: &ClassOperand) -> String {
    match &o.filter {
        None => format!("{}: {}", o.binder, o.class),
        Some(f) => format!(
            "select({}: {}, {}) as {}",
            f.binder,
            o.class,
            print_predicate(&f.predicate),
            o.binder
        ),
    }
}

pub fn print_mapping(e: &MappingExpr) -> String {
    let list = |items: Vec<String>| items.join(", ");
    match e {
        MappingExpr::Source { binder, interface } => format!("{binder}: {interface}"),
        MappingExpr::Rebind { alias, child } => format!("{} as {alias}", print_mapping(child)),
        MappingExpr::Project { paths, child } | MappingExpr::Hide { paths, child } => {
            let f = if matches!(e, MappingExpr::Project { .. }) {
                "project"
            } else {
                "hide"
            };
            let mut args: Vec<String> = paths.iter().map(ToString::to_string).collect();
            args.push(print_mapping(child));
            format!("{f}({})", list(args))
        }
        MappingExpr::Augment { bindings, child } => {
            let mut args: Vec<String> = bindings
                .iter()
                .map(|b| match b {
                    AugmentBinding::Computed {
                        name,
                        function,
                        arg,
                    } => format!("{name} := {}({arg})", function.name()),
                    AugmentBinding::Specific { name, ty } => format!("{name} : {ty}"),
                })
                .collect();
            args.push(print_mapping(child));
            format!("augment({})", list(args))
        }
        MappingExpr::Select { predicate, child } => {
            format!(
                "select({}, {})",
                print_mapping(child),
                print_predicate(predicate)
            )
        }
        MappingExpr::Join {
            predicate,
            left,
            right,
        } => format!(
            "join({}, {}, {})",
            print_mapping(left),
            print_mapping(right),
            print_predicate(predicate)
        ),
        MappingExpr::Generalize {
            properties,
            operands,
        } => {
            let mut args: Vec<String> = properties.iter().map(ToString::to_string).collect();
            args.extend(operands.iter().map(operand));
            format!("generalize({})", list(args))
        }
        MappingExpr::Specialize {
            operands,
            predicate,
        } => {
            let mut args: Vec<String> = operands.iter().map(operand).collect();
            args.push(print_predicate(predicate));
            format!("specialize({})", list(args))
        }
    }
}

fn config_entry(out: &mut String, indent: &str, c: &ConfigEntry) {
    let _ = match c {
        ConfigEntry::RefreshEvery(p) => writeln!(out, "{indent}refresh every {p};"),
        ConfigEntry::KeepPast(n) => writeln!(out, "{indent}keep past {n};"),
        ConfigEntry::KeepFor(p) => writeln!(out, "{indent}keep for {p};"),
    };
}

/// Canonical text of a definition; reparses to an equal AST.
pub fn print_warehouse_def(def: &WarehouseDef) -> String {
    let mut out = String::new();
    if let Some(n) = &def.name {
        let _ = writeln!(out, "warehouse {n};\n");
    }
    for c in &def.classes {
        out.push_str("interface ");
        out.push_str(&c.name);
        if !c.supers.is_empty() {
            let _ = write!(out, " (extend {})", c.supers.join(", "));
        }
        out.push_str(" {\n");
        for p in &c.properties {
            let prefix = if p.explicit_origin {
                p.origin.prefix()
            } else {
                ""
            };
            let _ = match &p.kind {
                PropertyKind::Attribute(ty) => {
                    writeln!(out, "    {prefix}attribute {ty} {};", p.name)
                }
                PropertyKind::Relation(r) => {
                    let word = match r.kind {
                        crate::property::RelationKind::Association => "relationship",
                        crate::property::RelationKind::Composition => "composition",
                    };
                    let inv = r
                        .inverse
                        .as_ref()
                        .map(|i| format!(" inverse {}::{i}", r.target))
                        .unwrap_or_default();
                    writeln!(
                        out,
                        "    {prefix}{word} {} {}{inv};",
                        relation_target_text(r),
                        p.name
                    )
                }
            };
        }
        out.push('}');
        if let Some(f) = &c.filters {
            out.push_str("\nwith filters {\n");
            if !f.temporal.is_empty() {
                let _ = writeln!(out, "    temporal {};", f.temporal.join(", "));
            }
            if !f.archive.is_empty() {
                let items: Vec<String> = f
                    .archive
                    .iter()
                    .map(|(func, p)| format!("{}({p})", func.name()))
                    .collect();
                let _ = writeln!(out, "    archive {};", items.join(", "));
            }
            out.push('}');
        }
        out.push_str("\n\n");
    }
    for e in &def.environments {
        let _ = writeln!(out, "Environment {} {{", e.name);
        let _ = writeln!(out, "    class {};", e.classes.join(", "));
        for c in &e.config {
            config_entry(&mut out, "    ", c);
        }
        out.push_str("}\n\n");
    }
    if !def.config.is_empty() {
        out.push_str("config {\n");
        for c in &def.config {
            config_entry(&mut out, "    ", c);
        }
        out.push_str("}\n\n");
    }
    for m in &def.mappings {
        let _ = writeln!(out, "mapping {} = {};", m.class, print_mapping(&m.expr));
    }
    out
}
