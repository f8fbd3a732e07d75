use super::{
    AggFn, Atom, AugmentBinding, ClassDecl, ClassOperand, CmpOp, ConfigEntry, DslError, EnvDecl,
    FiltersDecl, Literal, MappingDecl, MappingExpr, OperandFilter, Path, Predicate, PropDecl,
    WarehouseDef,
};
use crate::model::{ArchiveFn, Period};
use crate::property::{Origin, PropertyKind, RelationDef, RelationKind};
use crate::source::{parse_extends, parse_relation_target, parse_value_type};
use crate::syntax::{Cursor, SyntaxError, Tok};
use crate::temporal::TimeUnit;
use crate::value::ValueType;

const FUNCTIONS: [&str; 7] = [
    "select",
    "project",
    "hide",
    "augment",
    "join",
    "generalize",
    "specialize",
];

pub fn parse_warehouse_def(text: &str) -> Result<WarehouseDef, DslError> {
    let mut c = Cursor::new(text)?;
    let mut def = WarehouseDef::default();
    while !c.at_eof() {
        if c.eat_keyword("warehouse") {
            def.name = Some(c.ident("warehouse name")?);
            c.expect(&Tok::Semi)?;
        } else if c.is_keyword("interface") {
            def.classes.push(parse_class(&mut c)?);
        } else if c.is_keyword("Environment") || c.is_keyword("environment") {
            def.environments.push(parse_environment(&mut c)?);
        } else if c.is_keyword("mapping") {
            let pos = c.pos();
            c.advance();
            let class = c.ident("class name")?;
            c.expect(&Tok::Eq)?;
            let expr = parse_expr(&mut c)?;
            c.expect(&Tok::Semi)?;
            def.mappings.push(MappingDecl { class, expr, pos });
        } else if c.eat_keyword("config") {
            c.expect(&Tok::LBrace)?;
            while !c.eat(&Tok::RBrace) {
                def.config.push(parse_config_entry(&mut c)?);
            }
        } else {
            return Err(c
                .error("`interface`, `Environment`, `mapping`, `config` or `warehouse`")
                .into());
        }
    }
    Ok(def)
}

pub fn parse_mapping(text: &str) -> Result<MappingExpr, DslError> {
    let mut c = Cursor::new(text)?;
    let e = parse_expr(&mut c)?;
    if !c.at_eof() {
        return Err(c.error("end of mapping").into());
    }
    Ok(e)
}

fn parse_class(c: &mut Cursor) -> Result<ClassDecl, DslError> {
    let pos = c.pos();
    c.expect_keyword("interface")?;
    let name = c.ident("class name")?;
    let supers = parse_extends(c)?;
    c.expect(&Tok::LBrace)?;
    let mut properties = Vec::new();
    while !c.eat(&Tok::RBrace) {
        properties.push(parse_prop_decl(c)?);
    }
    c.eat(&Tok::Semi);
    let filters = if c.eat_keyword("with") {
        c.expect_keyword("filters")?;
        Some(parse_filters(c)?)
    } else {
        None
    };
    Ok(ClassDecl {
        name,
        supers,
        properties,
        filters,
        pos,
    })
}

fn parse_prop_decl(c: &mut Cursor) -> Result<PropDecl, DslError> {
    let pos = c.pos();
    let word = c.ident("property declaration")?;
    let (origin, explicit_origin, keyword) = match word.split_at_checked(2) {
        Some(("D_", rest)) => (Origin::Derived, true, rest),
        Some(("C_", rest)) => (Origin::Computed, true, rest),
        Some(("S_", rest)) => (Origin::Specific, true, rest),
        _ => (Origin::Derived, false, word.as_str()),
    };
    let bad = |found: &str| SyntaxError {
        line: pos.line,
        col: pos.col,
        expected: "`attribute`, `relationship` or `composition` with optional D_/C_/S_ prefix"
            .into(),
        found: format!("`{found}`"),
    };
    let (name, kind) = match keyword {
        "attribute" => {
            let ty = parse_value_type(c)?;
            (c.ident("attribute name")?, PropertyKind::Attribute(ty))
        }
        "relationship" | "composition" => {
            let rk = if keyword == "relationship" {
                RelationKind::Association
            } else {
                RelationKind::Composition
            };
            let (target, many) = parse_relation_target(c)?;
            let name = c.ident("relationship name")?;
            let mut inverse = None;
            if c.eat_keyword("inverse") {
                let ipos = c.pos();
                let class = c.ident("class name")?;
                if class != target {
                    return Err(SyntaxError {
                        line: ipos.line,
                        col: ipos.col,
                        expected: format!("`{target}`"),
                        found: format!("`{class}`"),
                    }
                    .into());
                }
                c.expect(&Tok::ColonColon)?;
                inverse = Some(c.ident("inverse name")?);
            }
            (
                name,
                PropertyKind::Relation(RelationDef {
                    kind: rk,
                    target,
                    many,
                    inverse,
                }),
            )
        }
        other => return Err(bad(other).into()),
    };
    c.expect(&Tok::Semi)?;
    Ok(PropDecl {
        name,
        origin,
        explicit_origin,
        kind,
        pos,
    })
}

fn parse_filters(c: &mut Cursor) -> Result<FiltersDecl, DslError> {
    c.expect(&Tok::LBrace)?;
    let mut f = FiltersDecl::default();
    while !c.eat(&Tok::RBrace) {
        if c.eat_keyword("temporal") {
            f.temporal
                .extend(c.comma_list(|c| c.ident("property name"))?);
        } else if c.eat_keyword("archive") {
            let items = c.comma_list(|c| {
                let pos = c.pos();
                let fname = c.ident("archive function")?;
                let func = ArchiveFn::from_name(&fname).ok_or(SyntaxError {
                    line: pos.line,
                    col: pos.col,
                    expected: "archive function (avg, sum, min, max, count, last)".into(),
                    found: format!("`{fname}`"),
                })?;
                c.expect(&Tok::LParen)?;
                let prop = c.ident("property name")?;
                c.expect(&Tok::RParen)?;
                Ok((func, prop))
            })?;
            f.archive.extend(items);
        } else {
            return Err(c.error("`temporal` or `archive`").into());
        }
        c.expect(&Tok::Semi)?;
    }
    Ok(f)
}

fn parse_environment(c: &mut Cursor) -> Result<EnvDecl, DslError> {
    let pos = c.pos();
    c.advance();
    let name = c.ident("environment name")?;
    c.expect(&Tok::LBrace)?;
    c.expect_keyword("class")?;
    let classes = c.comma_list(|c| c.ident("class name"))?;
    c.expect(&Tok::Semi)?;
    let mut config = Vec::new();
    while !c.eat(&Tok::RBrace) {
        config.push(parse_config_entry(c)?);
    }
    Ok(EnvDecl {
        name,
        classes,
        config,
        pos,
    })
}

fn parse_period(c: &mut Cursor) -> Result<Period, DslError> {
    let count = c.integer("count")?;
    let pos = c.pos();
    let unit_name = c.ident("time unit")?;
    let unit: TimeUnit = unit_name.parse().map_err(|_| SyntaxError {
        line: pos.line,
        col: pos.col,
        expected: "time unit".into(),
        found: format!("`{unit_name}`"),
    })?;
    Ok(Period { count, unit })
}

fn parse_config_entry(c: &mut Cursor) -> Result<ConfigEntry, DslError> {
    let entry = if c.eat_keyword("refresh") {
        c.expect_keyword("every")?;
        ConfigEntry::RefreshEvery(parse_period(c)?)
    } else if c.eat_keyword("keep") {
        if c.eat_keyword("past") {
            let n = c.integer("state count")?;
            let n = u32::try_from(n).map_err(|_| c.error("non-negative state count"))?;
            ConfigEntry::KeepPast(n)
        } else if c.eat_keyword("for") {
            ConfigEntry::KeepFor(parse_period(c)?)
        } else {
            return Err(c.error("`past` or `for`").into());
        }
    } else {
        return Err(c.error("`refresh every`, `keep past` or `keep for`").into());
    };
    c.expect(&Tok::Semi)?;
    Ok(entry)
}

fn is_type_word(t: &Tok) -> bool {
    matches!(t, Tok::Ident(s) if ValueType::from_keyword(s).is_some() || s == "Struct" || s == "Set")
}

/// `b: Name` or a nested function call.
fn at_source(c: &Cursor) -> bool {
    matches!((c.peek(), c.peek_at(1)), (Tok::Ident(_), Tok::LParen))
        || (matches!((c.peek(), c.peek_at(1)), (Tok::Ident(_), Tok::Colon))
            && !is_type_word(c.peek_at(2)))
}

fn parse_expr(c: &mut Cursor) -> Result<MappingExpr, DslError> {
    let pos = c.pos();
    let fname = c.ident("mapping function")?;
    if !FUNCTIONS.contains(&fname.as_str()) {
        return Err(DslError::UnknownFunction { name: fname, pos });
    }
    c.expect(&Tok::LParen)?;
    let expr = match fname.as_str() {
        "select" => {
            let child = parse_source(c)?;
            c.expect(&Tok::Comma)?;
            let predicate = parse_predicate(c)?;
            MappingExpr::Select {
                predicate,
                child: Box::new(child),
            }
        }
        "project" | "hide" => {
            let mut paths = Vec::new();
            while !at_source(c) {
                paths.push(parse_path(c)?);
                c.expect(&Tok::Comma)?;
            }
            let child = Box::new(parse_source(c)?);
            if fname == "project" {
                MappingExpr::Project { paths, child }
            } else {
                MappingExpr::Hide { paths, child }
            }
        }
        "augment" => {
            let mut bindings = Vec::new();
            while !at_source(c) {
                bindings.push(parse_binding(c)?);
                c.expect(&Tok::Comma)?;
            }
            MappingExpr::Augment {
                bindings,
                child: Box::new(parse_source(c)?),
            }
        }
        "join" => {
            let left = parse_source(c)?;
            c.expect(&Tok::Comma)?;
            let right = parse_source(c)?;
            c.expect(&Tok::Comma)?;
            MappingExpr::Join {
                predicate: parse_predicate(c)?,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
        "generalize" => {
            let mut properties = Vec::new();
            while !at_operand(c) {
                properties.push(parse_path(c)?);
                c.expect(&Tok::Comma)?;
            }
            let mut operands = vec![parse_operand(c)?];
            while c.eat(&Tok::Comma) {
                operands.push(parse_operand(c)?);
            }
            MappingExpr::Generalize {
                properties,
                operands,
            }
        }
        "specialize" => {
            let mut operands = vec![parse_operand(c)?];
            c.expect(&Tok::Comma)?;
            while at_operand(c) {
                operands.push(parse_operand(c)?);
                c.expect(&Tok::Comma)?;
            }
            MappingExpr::Specialize {
                operands,
                predicate: parse_predicate(c)?,
            }
        }
        _ => unreachable!(),
    };
    c.expect(&Tok::RParen)?;
    Ok(expr)
}

fn parse_source(c: &mut Cursor) -> Result<MappingExpr, DslError> {
    let expr = if matches!(c.peek_at(1), Tok::Colon) {
        let binder = c.ident("binder")?;
        c.expect(&Tok::Colon)?;
        let interface = c.ident("interface name")?;
        MappingExpr::Source { binder, interface }
    } else {
        parse_expr(c)?
    };
    if c.eat_keyword("as") {
        let alias = c.ident("binder")?;
        return Ok(MappingExpr::Rebind {
            alias,
            child: Box::new(expr),
        });
    }
    Ok(expr)
}

fn at_operand(c: &Cursor) -> bool {
    matches!((c.peek(), c.peek_at(1)), (Tok::Ident(_), Tok::Colon))
        || matches!((c.peek(), c.peek_at(1)), (Tok::Ident(s), Tok::LParen) if s == "select")
}

fn parse_operand(c: &mut Cursor) -> Result<ClassOperand, DslError> {
    if c.is_keyword("select") && matches!(c.peek_at(1), Tok::LParen) {
        c.advance();
        c.advance();
        let inner = c.ident("binder")?;
        c.expect(&Tok::Colon)?;
        let class = c.ident("class name")?;
        c.expect(&Tok::Comma)?;
        let predicate = parse_predicate(c)?;
        c.expect(&Tok::RParen)?;
        c.expect_keyword("as")?;
        let binder = c.ident("binder")?;
        return Ok(ClassOperand {
            binder,
            class,
            filter: Some(OperandFilter {
                binder: inner,
                predicate,
            }),
        });
    }
    let binder = c.ident("binder")?;
    c.expect(&Tok::Colon)?;
    let class = c.ident("class name")?;
    Ok(ClassOperand {
        binder,
        class,
        filter: None,
    })
}

fn parse_binding(c: &mut Cursor) -> Result<AugmentBinding, DslError> {
    let name = c.ident("binding name")?;
    if c.eat(&Tok::Assign) {
        let pos = c.pos();
        let fname = c.ident("aggregate function")?;
        let function =
            AggFn::from_name(&fname).ok_or(DslError::UnknownFunction { name: fname, pos })?;
        c.expect(&Tok::LParen)?;
        let arg = parse_path(c)?;
        c.expect(&Tok::RParen)?;
        Ok(AugmentBinding::Computed {
            name,
            function,
            arg,
        })
    } else if c.eat(&Tok::Colon) {
        Ok(AugmentBinding::Specific {
            name,
            ty: parse_value_type(c)?,
        })
    } else {
        Err(c.error("`:=` or `:`").into())
    }
}

fn parse_path(c: &mut Cursor) -> Result<Path, DslError> {
    let mut segs = vec![c.ident("path")?];
    while c.eat(&Tok::Dot) {
        segs.push(c.ident("path segment")?);
    }
    Ok(Path(segs))
}

fn parse_predicate(c: &mut Cursor) -> Result<Predicate, DslError> {
    if c.eat_keyword("true") {
        return Ok(Predicate::tautology());
    }
    let mut atoms = vec![parse_atom(c)?];
    while c.eat_keyword("and") {
        atoms.push(parse_atom(c)?);
    }
    Ok(Predicate(atoms))
}

fn parse_atom(c: &mut Cursor) -> Result<Atom, DslError> {
    let path = parse_path(c)?;
    if c.eat(&Tok::Contains) || c.eat_keyword("contains") {
        return Ok(Atom::Contains {
            path,
            binder: c.ident("binder")?,
        });
    }
    let op = match c.peek() {
        Tok::Eq => CmpOp::Eq,
        Tok::Ne => CmpOp::Ne,
        Tok::Lt => CmpOp::Lt,
        Tok::Le => CmpOp::Le,
        Tok::Gt => CmpOp::Gt,
        Tok::Ge => CmpOp::Ge,
        _ => return Err(c.error("comparison operator or `∋`").into()),
    };
    c.advance();
    let literal = match c.peek() {
        Tok::Str(s) => Literal::Str(s.clone()),
        Tok::Int(i) => Literal::Int(*i),
        Tok::Float(x) => Literal::Float(*x),
        _ => return Err(c.error("literal").into()),
    };
    c.advance();
    Ok(Atom::Compare { path, op, literal })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_over_source() {
        let e = parse_mapping(r#"select(p: PRATICIEN, p.catégorie = "chirurgie")"#).unwrap();
        assert_eq!(
            e,
            MappingExpr::Select {
                predicate: Predicate(vec![Atom::Compare {
                    path: Path::new(["p", "catégorie"]),
                    op: CmpOp::Eq,
                    literal: Literal::Str("chirurgie".into()),
                }]),
                child: Box::new(MappingExpr::Source {
                    binder: "p".into(),
                    interface: "PRATICIEN".into()
                }),
            }
        );
    }

    #[test]
    fn three_deep_chain() {
        let e = parse_mapping(
            r#"augment(nb_services := count(h.organisation), année_création : Short,
                 project(h.nom, h.adresse.ville, h.budget, h.organisation,
                   select(e: ETABLISSEMENT, e.statut = "public") as h))"#,
        )
        .unwrap();
        assert_eq!(e.depth(), 3);
        let MappingExpr::Augment { bindings, child } = &e else {
            panic!()
        };
        assert_eq!(bindings.len(), 2);
        assert!(matches!(
            &bindings[1],
            AugmentBinding::Specific {
                ty: ValueType::Short,
                ..
            }
        ));
        let MappingExpr::Project { paths, child } = child.as_ref() else {
            panic!()
        };
        assert_eq!(paths[1], Path::new(["h", "adresse", "ville"]));
        assert!(matches!(child.as_ref(), MappingExpr::Rebind { alias, .. } if alias == "h"));
    }

    #[test]
    fn hierarchization_forms() {
        let e = parse_mapping("specialize(c: Chirurgiens, c.année_naissance ≥ 1970)").unwrap();
        assert!(matches!(&e, MappingExpr::Specialize { operands, predicate }
            if operands.len() == 1 && predicate.0.len() == 1));
        let e = parse_mapping(
            r#"specialize(select(h: Hôpitaux_Publics, h.ville = "Toulouse") as e, s: Services, e.organisation ∋ s)"#,
        )
        .unwrap();
        let MappingExpr::Specialize {
            operands,
            predicate,
        } = &e
        else {
            panic!()
        };
        assert_eq!(operands.len(), 2);
        assert!(operands[0].filter.is_some());
        assert!(matches!(&predicate.0[0], Atom::Contains { binder, .. } if binder == "s"));
        let e = parse_mapping("generalize(c.nom, c.prénom, c: Chirurgiens)").unwrap();
        assert!(
            matches!(&e, MappingExpr::Generalize { properties, operands }
            if properties.len() == 2 && operands.len() == 1)
        );
    }

    #[test]
    fn unknown_functions() {
        assert!(matches!(
            parse_mapping("frobnicate(p: A, true)"),
            Err(DslError::UnknownFunction { .. })
        ));
        assert!(matches!(
            parse_mapping("augment(x := last(p.y), p: A)"),
            Err(DslError::UnknownFunction { .. })
        ));
    }

    #[test]
    fn archive_outside_filters_is_a_syntax_error() {
        let err = parse_warehouse_def("interface X {}\narchive avg(revenus);").unwrap_err();
        assert!(
            matches!(err, DslError::Syntax(ref e) if e.line == 2 && e.col == 1),
            "{err:?}"
        );
    }

    #[test]
    fn minimal_class() {
        let d = parse_warehouse_def("interface X {} ").unwrap();
        assert_eq!(d.classes.len(), 1);
        assert!(d.classes[0].filters.is_none());
    }

    #[test]
    fn origin_prefixes() {
        let d = parse_warehouse_def(
            "interface X { D_attribute String a; C_attribute Short b; S_attribute Long c; attribute Date d; D_relationship <Y> y; }\ninterface Y {}",
        )
        .unwrap();
        let origins: Vec<_> = d.classes[0]
            .properties
            .iter()
            .map(|p| (p.origin, p.explicit_origin))
            .collect();
        assert_eq!(
            origins,
            vec![
                (Origin::Derived, true),
                (Origin::Computed, true),
                (Origin::Specific, true),
                (Origin::Derived, false),
                (Origin::Derived, true)
            ]
        );
        assert!(parse_warehouse_def("interface X { Q_attribute String a; }").is_err());
    }
}
