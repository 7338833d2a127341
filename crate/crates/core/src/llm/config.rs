//! Gateway configuration: named backends with sampling defaults and the
//! role-to-backend assignment.
//!
//! ```toml
//! [backends.qwen-plus]
//! kind = "http"
//! endpoint = "https://example.invalid/v1"
//! model = "qwen-plus"
//! api_key_env = "QWEN_API_KEY"
//! top_p = 0.8
//!
//! [backends.offline]
//! kind = "scripted"
//! spec = "scripted/reference.json"
//!
//! [roles]
//! planner = "offline"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    ChatBackend, HttpBackend, LlmError, Sampling, ScriptedBackend, ScriptedSpec,
    DEFAULT_TEMPERATURE, DEFAULT_TOP_P,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub version: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub spec: Option<PathBuf>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub top_p: Option<f64>,
}

impl BackendConfig {
    pub fn sampling(&self) -> Sampling {
        Sampling {
            temperature: self.temperature.unwrap_or(DEFAULT_TEMPERATURE),
            top_p: self.top_p.unwrap_or(DEFAULT_TOP_P),
            seed: None,
        }
    }
}

/// Which backend serves each language-model role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    pub planner: Option<String>,
    pub translator: Option<String>,
    pub summarizer: Option<String>,
    /// Instruction-pair generator of the fine-tuning pipeline.
    pub generator: Option<String>,
    /// Pair verifier; must differ from the generator.
    pub verifier: Option<String>,
    /// Model-adjustment language model.
    pub slm: Option<String>,
}

impl Roles {
    fn entries(&self) -> [(&'static str, &Option<String>); 6] {
        [
            ("planner", &self.planner),
            ("translator", &self.translator),
            ("summarizer", &self.summarizer),
            ("generator", &self.generator),
            ("verifier", &self.verifier),
            ("slm", &self.slm),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub roles: Roles,
}

impl GatewayConfig {
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let cfg: Self = toml::from_str(text).map_err(|e| LlmError::MalformedConfig(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), LlmError> {
        let bad = |m: String| Err(LlmError::MalformedConfig(m));
        if self.backends.is_empty() {
            return bad("no backends configured".into());
        }
        for (name, b) in &self.backends {
            let s = b.sampling();
            if !(s.temperature >= 0.0) || !(s.top_p > 0.0 && s.top_p <= 1.0) {
                return bad(format!("backend `{name}`: sampling out of range"));
            }
            match b.kind {
                BackendKind::Http if b.endpoint.is_none() || b.api_key_env.is_none() => {
                    return bad(format!("backend `{name}`: http needs `endpoint` and `api_key_env`"))
                }
                BackendKind::Scripted if b.spec.is_none() => {
                    return bad(format!("backend `{name}`: scripted needs `spec`"))
                }
                _ => {}
            }
        }
        for (role, name) in self.roles.entries() {
            if let Some(n) = name {
                if !self.backends.contains_key(n) {
                    return bad(format!("role `{role}` names unknown backend `{n}`"));
                }
            }
        }
        if let (Some(g), Some(v)) = (&self.roles.generator, &self.roles.verifier) {
            if g == v {
                return bad(format!(
                    "generator and verifier must use different backends (both `{g}`)"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct Gateway {
    pub config: GatewayConfig,
    backends: BTreeMap<String, Arc<dyn ChatBackend>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backends", &self.backends.keys().collect::<Vec<_>>())
            .field("roles", &self.config.roles)
            .finish()
    }
}

impl Gateway {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::MalformedConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base, |k| std::env::var(k).ok())
    }

    /// Builds every backend. Relative spec paths resolve against `base`;
    /// credentials come from `env`.
    pub fn from_text(
        text: &str,
        base: &Path,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, LlmError> {
        let config = GatewayConfig::parse(text)?;
        let mut backends: BTreeMap<String, Arc<dyn ChatBackend>> = BTreeMap::new();
        for (name, b) in &config.backends {
            let model = b.model.clone().unwrap_or_else(|| name.clone());
            let backend: Arc<dyn ChatBackend> = match b.kind {
                BackendKind::Http => {
                    let var = b.api_key_env.as_deref().unwrap_or_default();
                    let key = env(var).ok_or_else(|| {
                        LlmError::MalformedConfig(format!(
                            "backend `{name}`: environment variable {var} is not set"
                        ))
                    })?;
                    Arc::new(HttpBackend::new(
                        name.clone(),
                        b.endpoint.clone().unwrap_or_default(),
                        model,
                        key,
                        b.sampling(),
                    ))
                }
                BackendKind::Scripted => {
                    let spec = ScriptedSpec::load(&base.join(b.spec.as_ref().unwrap()))?;
                    Arc::new(ScriptedBackend::new(name.clone(), spec)?.with_sampling(model, b.sampling()))
                }
            };
            backends.insert(name.clone(), backend);
        }
        Ok(Self { config, backends })
    }

    /// Assembles a gateway from already constructed backends.
    pub fn from_backends(backends: Vec<Arc<dyn ChatBackend>>, roles: Roles) -> Result<Self, LlmError> {
        let mut config = GatewayConfig {
            backends: BTreeMap::new(),
            roles,
        };
        let mut map = BTreeMap::new();
        for b in backends {
            config.backends.insert(
                b.name().to_string(),
                BackendConfig {
                    kind: BackendKind::Scripted,
                    model: Some(b.model().to_string()),
                    version: None,
                    endpoint: None,
                    api_key_env: None,
                    spec: Some(PathBuf::from("<in-memory>")),
                    temperature: Some(b.sampling().temperature),
                    top_p: Some(b.sampling().top_p),
                },
            );
            map.insert(b.name().to_string(), b);
        }
        config.check()?;
        Ok(Self {
            config,
            backends: map,
        })
    }

    pub fn backend(&self, name: &str) -> Option<Arc<dyn ChatBackend>> {
        self.backends.get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.backends.keys().cloned().collect()
    }

    /// Backend assigned to a role (`planner`, `translator`, ...).
    pub fn role(&self, role: &str) -> Option<Arc<dyn ChatBackend>> {
        let name = self
            .config
            .roles
            .entries()
            .into_iter()
            .find(|(r, _)| *r == role)
            .and_then(|(_, n)| n.clone())?;
        self.backend(&name)
    }
}
