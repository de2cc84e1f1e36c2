use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub required_args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainTools {
    pub tools: BTreeMap<String, ToolSpec>,
}

/// Per-domain tool whitelists with the argument keys each tool requires.
///
/// File form: `{"math": {"tools": {"calculator": {"required_args": ["expression"]}}}, ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolSchema {
    domains: BTreeMap<String, DomainTools>,
}

impl ToolSchema {
    pub fn new(domains: BTreeMap<String, DomainTools>) -> Result<Self> {
        let schema = Self { domains };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::InvalidParameter("tool schema has no domains".into()));
        }
        for (domain, d) in &self.domains {
            if d.tools.is_empty() {
                return Err(Error::InvalidParameter(format!("empty whitelist for domain {domain:?}")));
            }
            for (tool, spec) in &d.tools {
                if spec.required_args.is_empty() {
                    return Err(Error::InvalidParameter(format!(
                        "tool {tool:?} in {domain:?} has no required arguments"
                    )));
                }
                // a tool shared across domains must agree on its arguments
                if let Some(other) = self.find_tool(tool) {
                    if other != spec {
                        return Err(Error::InvalidParameter(format!(
                            "tool {tool:?} declared with conflicting required arguments"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    pub fn allows(&self, domain: &str, tool: &str) -> bool {
        self.domains.get(domain).is_some_and(|d| d.tools.contains_key(tool))
    }

    /// Required argument keys of `tool`, looked up across all domains.
    pub fn required_args(&self, tool: &str) -> Option<&[String]> {
        self.find_tool(tool).map(|s| s.required_args.as_slice())
    }

    fn find_tool(&self, tool: &str) -> Option<&ToolSpec> {
        self.domains.values().find_map(|d| d.tools.get(tool))
    }
}

impl Default for ToolSchema {
    /// One tool per benchmark domain. The translation entry is a placeholder
    /// chosen here; override it with a schema file.
    fn default() -> Self {
        let entry = |tool: &str, arg: &str| DomainTools {
            tools: [(tool.to_string(), ToolSpec { required_args: vec![arg.to_string()] })].into(),
        };
        Self {
            domains: [
                ("code".to_string(), entry("python_interpreter", "code")),
                ("math".to_string(), entry("calculator", "expression")),
                ("search".to_string(), entry("web_search", "query")),
                ("translation".to_string(), entry("translator", "text")),
            ]
            .into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_is_valid() {
        let s = ToolSchema::default();
        s.validate().unwrap();
        assert!(s.allows("math", "calculator"));
        assert!(!s.allows("math", "web_search"));
        assert!(!s.allows("poetry", "calculator"));
        assert_eq!(s.required_args("web_search").unwrap(), ["query".to_string()]);
    }

    #[test]
    fn file_round_trip_and_validation() {
        let s = ToolSchema::default();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.starts_with(r#"{"code":{"tools":{"python_interpreter":{"required_args":["code"]}}}"#));
        assert_eq!(ToolSchema::from_json(&text).unwrap(), s);
        assert!(ToolSchema::from_json(r#"{"math":{"tools":{}}}"#).is_err());
        assert!(ToolSchema::from_json(r#"{"math":{"tools":{"calc":{"required_args":[]}}}}"#).is_err());
        assert!(ToolSchema::from_json("{}").is_err());
        assert!(ToolSchema::from_json(
            r#"{"a":{"tools":{"t":{"required_args":["x"]}}},"b":{"tools":{"t":{"required_args":["y"]}}}}"#
        )
        .is_err());
    }
}
