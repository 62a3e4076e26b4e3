use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::OsError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDecl {
    pub app_id: String,
    pub intent_type: String,
    pub target_state: String,
    pub supports_result: bool,
    pub payload_slot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Direct(IntentDecl),
    /// Two or more handlers, sorted by app id.
    Chooser(Vec<IntentDecl>),
}

/// Intent declarations gathered from every manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntentRegistry {
    by_type: BTreeMap<String, Vec<IntentDecl>>,
}

impl IntentRegistry {
    pub fn new(decls: Vec<IntentDecl>) -> Result<Self, OsError> {
        let mut seen = BTreeSet::new();
        let mut by_type: BTreeMap<String, Vec<IntentDecl>> = BTreeMap::new();
        for d in decls {
            if !seen.insert((d.app_id.clone(), d.intent_type.clone())) {
                return Err(OsError::Pack(format!("{} declares `{}` twice", d.app_id, d.intent_type)));
            }
            by_type.entry(d.intent_type.clone()).or_default().push(d);
        }
        for v in by_type.values_mut() {
            v.sort_by(|a, b| a.app_id.cmp(&b.app_id));
        }
        Ok(Self { by_type })
    }

    pub fn resolve(&self, intent_type: &str) -> Result<Resolution, OsError> {
        match self.by_type.get(intent_type).map(Vec::as_slice) {
            None | Some([]) => Err(OsError::NoHandler(intent_type.to_string())),
            Some([one]) => Ok(Resolution::Direct(one.clone())),
            Some(many) => Ok(Resolution::Chooser(many.to_vec())),
        }
    }

    pub fn handler(&self, intent_type: &str, app_id: &str) -> Option<&IntentDecl> {
        self.by_type.get(intent_type)?.iter().find(|d| d.app_id == app_id)
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.by_type.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decl(app: &str, ty: &str) -> IntentDecl {
        IntentDecl {
            app_id: app.into(),
            intent_type: ty.into(),
            target_state: "main".into(),
            supports_result: false,
            payload_slot: None,
        }
    }

    #[test]
    fn zero_one_many() {
        let r = IntentRegistry::new(vec![decl("b", "share"), decl("a", "share"), decl("c", "pick")]).unwrap();
        assert!(matches!(r.resolve("pick"), Ok(Resolution::Direct(d)) if d.app_id == "c"));
        match r.resolve("share").unwrap() {
            Resolution::Chooser(c) => {
                assert_eq!(c.iter().map(|d| d.app_id.as_str()).collect::<Vec<_>>(), ["a", "b"])
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(r.resolve("nope"), Err(OsError::NoHandler("nope".into())));
    }

    #[test]
    fn duplicate_declaration_rejected() {
        assert!(IntentRegistry::new(vec![decl("a", "x"), decl("a", "x")]).is_err());
    }
}
