//! Flat JSON mirror of a graph:
//! `{"entities":[{"name":..,"concept":..,"properties":{..}}]}`.
//!
//! Schema properties are written as plain JSON values (arrays for
//! multi-valued ones); properties outside the schema are written as arrays of
//! `{"@id": name}` or `{"@value": lexical, "@type": xsd}` objects.

use serde_json::{json, Map, Number, Value};

use super::schema::{self, Range};
use super::{Concept, Datatype, KgError, KnowledgeGraph, Literal, Term, Triple, TYPE_PREDICATE};

pub fn to_json(g: &KnowledgeGraph) -> String {
    let mut entities = Vec::new();
    for (concept, name) in g.entity_names() {
        let mut props = Map::new();
        let mut opaque: Vec<(&str, Value)> = Vec::new();
        for (p, o) in g.statements_of(name) {
            match schema::lookup(concept, p) {
                Some(spec) => {
                    let v = plain_value(o);
                    if spec.is_multi() {
                        match props.entry(spec.name).or_insert_with(|| Value::Array(Vec::new())) {
                            Value::Array(items) => items.push(v),
                            _ => unreachable!("multi-valued properties are arrays"),
                        }
                    } else {
                        props.insert(spec.name.to_string(), v);
                    }
                }
                None => opaque.push((p, tagged_value(o))),
            }
        }
        for (p, v) in opaque {
            match props.entry(p).or_insert_with(|| Value::Array(Vec::new())) {
                Value::Array(items) => items.push(v),
                _ => unreachable!("opaque properties are arrays"),
            }
        }
        entities.push(json!({
            "name": name,
            "concept": concept.as_str(),
            "properties": props,
        }));
    }
    json!({ "entities": entities }).to_string()
}

fn plain_value(t: &Term) -> Value {
    match t {
        Term::Entity(e) => Value::String(e.clone()),
        Term::Concept(c) => Value::String(c.as_str().to_string()),
        Term::Literal(l) => match l.datatype() {
            Datatype::Boolean => Value::Bool(l.as_bool().unwrap_or(false)),
            Datatype::Integer => l.as_i64().map_or(Value::Null, Value::from),
            Datatype::Double => l
                .as_f64()
                .and_then(Number::from_f64)
                .map_or(Value::Null, Value::Number),
            Datatype::String => Value::String(l.lexical().to_string()),
        },
    }
}

fn tagged_value(t: &Term) -> Value {
    match t {
        Term::Entity(e) => json!({ "@id": e }),
        Term::Concept(c) => json!({ "@id": c.as_str() }),
        Term::Literal(l) => json!({ "@value": l.lexical(), "@type": l.datatype().xsd_name() }),
    }
}

pub fn from_json(text: &str) -> Result<KnowledgeGraph, KgError> {
    KnowledgeGraph::from_triples(json_triples(text)?)
}

/// Decodes the statements of a JSON document without validating them.
pub fn json_triples(text: &str) -> Result<Vec<Triple>, KgError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| KgError::Json(e.to_string()))?;
    let entities = doc
        .get("entities")
        .and_then(Value::as_array)
        .ok_or_else(|| KgError::Json("top-level `entities` array is missing".into()))?;
    let mut out = Vec::new();
    for (i, e) in entities.iter().enumerate() {
        let name = e
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| KgError::Schema {
                entity: format!("entities[{i}]"),
                message: "missing string field `name`".into(),
            })?
            .to_string();
        let concept_text = e.get("concept").and_then(Value::as_str).ok_or_else(|| KgError::Schema {
            entity: name.clone(),
            message: "missing string field `concept`".into(),
        })?;
        let concept = Concept::parse(concept_text).ok_or_else(|| KgError::Schema {
            entity: name.clone(),
            message: format!("unknown concept `{concept_text}`"),
        })?;
        out.push(Triple::new(name.clone(), TYPE_PREDICATE, Term::Concept(concept)));
        let props = match e.get("properties") {
            None => continue,
            Some(Value::Object(m)) => m,
            Some(_) => {
                return Err(KgError::Schema {
                    entity: name,
                    message: "`properties` must be an object".into(),
                })
            }
        };
        for (p, v) in props {
            let items: Vec<&Value> = match v {
                Value::Array(a) => a.iter().collect(),
                other => vec![other],
            };
            let range = schema::lookup(concept, p).map(|s| s.range);
            for item in items {
                let term = decode(item, range).map_err(|message| KgError::Schema {
                    entity: name.clone(),
                    message: format!("property `{p}`: {message}"),
                })?;
                out.push(Triple::new(name.clone(), p.clone(), term));
            }
        }
    }
    Ok(out)
}

fn decode(v: &Value, range: Option<Range>) -> Result<Term, String> {
    if let Value::Object(m) = v {
        if let Some(id) = m.get("@id").and_then(Value::as_str) {
            return Ok(Term::entity(id));
        }
        let lexical = m
            .get("@value")
            .and_then(Value::as_str)
            .ok_or("tagged value needs `@id` or `@value`")?;
        let dt = match m.get("@type").and_then(Value::as_str) {
            Some(t) => Datatype::from_xsd(t.trim_start_matches("xsd:")).ok_or(format!("unsupported type `{t}`"))?,
            None => Datatype::String,
        };
        return Literal::parse(lexical, dt).map(Term::Literal);
    }
    match (v, range) {
        (Value::String(s), Some(Range::Ref(_))) => Ok(Term::entity(s.clone())),
        (Value::String(s), Some(Range::Literal(dt))) if dt != Datatype::String => {
            Ok(Term::Literal(Literal::parse(s, dt).unwrap_or_else(|_| Literal::string(s.clone()))))
        }
        (Value::String(s), _) => Ok(Term::Literal(Literal::string(s.clone()))),
        (Value::Bool(b), _) => Ok(Term::Literal(Literal::boolean(*b))),
        (Value::Number(n), _) => {
            if let Some(i) = n.as_i64() {
                if range != Some(Range::Literal(Datatype::Double)) {
                    return Ok(Term::Literal(Literal::integer(i)));
                }
            }
            n.as_f64()
                .filter(|f| f.is_finite())
                .map(|f| Term::Literal(Literal::double(f)))
                .ok_or_else(|| format!("number {n} is out of range"))
        }
        (Value::Null, _) => Err("null is not a value".into()),
        (Value::Array(_), _) => Err("nested arrays are not allowed".into()),
        (Value::Object(_), _) => unreachable!(),
    }
}
