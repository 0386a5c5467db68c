use crate::corpus::{Entity, Passage};
use crate::error::{Error, Result};

/// A relation query for one (head, tail) entity pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub head: Entity,
    pub tail: Entity,
    pub text: String,
}

/// Renders the relation question for a head/tail pair. Names are substituted
/// verbatim.
pub fn render_query(head: &Entity, tail: &Entity) -> Result<Query> {
    for e in [head, tail] {
        if e.canonical_name.is_empty() {
            return Err(Error::InvalidQuery(format!("entity `{}` has an empty name", e.id)));
        }
    }
    Ok(Query {
        head: head.clone(),
        tail: tail.clone(),
        text: format!(
            "What is the relation between {} and {}?",
            head.canonical_name, tail.canonical_name
        ),
    })
}

/// Query text, one space, then the passage text.
pub fn augment_query(query_text: &str, passage_text: &str) -> String {
    let mut out = String::with_capacity(query_text.len() + 1 + passage_text.len());
    out.push_str(query_text);
    out.push(' ');
    out.push_str(passage_text);
    out
}

pub fn augment_with_passage(query_text: &str, passage: &Passage) -> String {
    augment_query(query_text, &passage.text())
}
