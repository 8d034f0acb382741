//! Deployment manifest parsing: the YAML subset actually consumed by the
//! control plane. Unrecognized fields (kompose annotations, volume mounts,
//! resource stanzas) are ignored with a warning so real-world manifests
//! pass through unchanged.

use serde::{Deserialize, Serialize};
use serde_yaml::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("invalid YAML: {0}")]
    Yaml(String),
    #[error("expected kind `Deployment`, got `{0}`")]
    WrongKind(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("invalid value for `{field}`: {msg}")]
    InvalidField { field: &'static str, msg: String },
    #[error("expected exactly one container, got {0}")]
    ContainerCount(usize),
    #[error("unsupported fieldRef `{0}` (only status.podIP is resolved)")]
    UnsupportedFieldRef(String),
    #[error("replicas must be >= 1")]
    InvalidReplicas,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartPolicy {
    Always,
    Never,
}

/// An environment entry: a literal value or the pod-IP field reference
/// resolved at pod start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvValue {
    Literal(String),
    PodIpFieldRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvVar {
    pub name: String,
    pub value: EnvValue,
}

/// The parsed deployment: everything the control plane acts on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentSpec {
    pub name: String,
    pub replicas: u32,
    pub node_name: Option<String>,
    pub host_network: bool,
    pub image: String,
    pub args: Vec<String>,
    pub env: Vec<EnvVar>,
    pub container_port: Option<u16>,
    pub restart_policy: RestartPolicy,
}

/// Parses a manifest, returning the spec plus warnings for every ignored
/// field.
pub fn parse_deployment_with_warnings(
    text: &str,
) -> Result<(DeploymentSpec, Vec<String>), ManifestError> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| ManifestError::Yaml(e.to_string()))?;
    let mut warnings = Vec::new();

    let root = doc
        .as_mapping()
        .ok_or(ManifestError::MissingField("kind"))?;
    let kind = str_field(root, "kind").ok_or(ManifestError::MissingField("kind"))?;
    if kind != "Deployment" {
        return Err(ManifestError::WrongKind(kind.to_string()));
    }
    warn_unknown(
        root,
        &["apiVersion", "kind", "metadata", "spec"],
        "",
        &mut warnings,
    );

    let metadata =
        map_field(root, "metadata").ok_or(ManifestError::MissingField("metadata.name"))?;
    let name = str_field(metadata, "name")
        .ok_or(ManifestError::MissingField("metadata.name"))?
        .to_string();
    warn_unknown(metadata, &["name", "labels"], "metadata.", &mut warnings);

    let spec = map_field(root, "spec").ok_or(ManifestError::MissingField("spec"))?;
    let replicas =
        u64_field(spec, "replicas").ok_or(ManifestError::MissingField("spec.replicas"))?;
    if replicas < 1 {
        return Err(ManifestError::InvalidReplicas);
    }
    warn_unknown(
        spec,
        &["replicas", "template", "selector", "strategy"],
        "spec.",
        &mut warnings,
    );
    if spec.contains_key("selector") {
        warnings.push("ignored field spec.selector".to_string());
    }
    if spec.contains_key("strategy") {
        warnings.push("ignored field spec.strategy".to_string());
    }

    let template =
        map_field(spec, "template").ok_or(ManifestError::MissingField("spec.template"))?;
    warn_unknown(
        template,
        &["metadata", "spec"],
        "spec.template.",
        &mut warnings,
    );
    let pod_spec =
        map_field(template, "spec").ok_or(ManifestError::MissingField("spec.template.spec"))?;
    warn_unknown(
        pod_spec,
        &[
            "containers",
            "nodeName",
            "hostNetwork",
            "restartPolicy",
            "volumes",
        ],
        "spec.template.spec.",
        &mut warnings,
    );
    if pod_spec.contains_key("volumes") {
        warnings.push("ignored field spec.template.spec.volumes".to_string());
    }

    let containers = pod_spec
        .get("containers")
        .and_then(Value::as_sequence)
        .ok_or(ManifestError::MissingField("spec.template.spec.containers"))?;
    if containers.len() != 1 {
        return Err(ManifestError::ContainerCount(containers.len()));
    }
    let container = containers[0]
        .as_mapping()
        .ok_or(ManifestError::MissingField(
            "spec.template.spec.containers[0]",
        ))?;
    warn_unknown(
        container,
        &["name", "image", "args", "env", "ports"],
        "container.",
        &mut warnings,
    );

    let image = str_field(container, "image")
        .ok_or(ManifestError::MissingField("container.image"))?
        .to_string();

    let args = match container.get("args") {
        None => Vec::new(),
        Some(v) => v
            .as_sequence()
            .ok_or(ManifestError::InvalidField {
                field: "container.args",
                msg: "expected a list of strings".to_string(),
            })?
            .iter()
            .map(|a| {
                a.as_str()
                    .map(str::to_string)
                    .ok_or(ManifestError::InvalidField {
                        field: "container.args",
                        msg: format!("non-string arg {a:?}"),
                    })
            })
            .collect::<Result<_, _>>()?,
    };

    let mut env = Vec::new();
    if let Some(entries) = container.get("env").and_then(Value::as_sequence) {
        for entry in entries {
            let entry = entry.as_mapping().ok_or(ManifestError::InvalidField {
                field: "container.env",
                msg: "expected a mapping".to_string(),
            })?;
            let var_name = str_field(entry, "name")
                .ok_or(ManifestError::MissingField("container.env[].name"))?
                .to_string();
            if let Some(value) = entry.get("value") {
                let literal = match value {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    other => {
                        return Err(ManifestError::InvalidField {
                            field: "container.env[].value",
                            msg: format!("unsupported value {other:?}"),
                        })
                    }
                };
                env.push(EnvVar {
                    name: var_name,
                    value: EnvValue::Literal(literal),
                });
            } else if let Some(value_from) = entry.get("valueFrom").and_then(Value::as_mapping) {
                let field_path = value_from
                    .get("fieldRef")
                    .and_then(Value::as_mapping)
                    .and_then(|m| str_field(m, "fieldPath"))
                    .ok_or(ManifestError::MissingField(
                        "container.env[].valueFrom.fieldRef.fieldPath",
                    ))?;
                if field_path != "status.podIP" {
                    return Err(ManifestError::UnsupportedFieldRef(field_path.to_string()));
                }
                env.push(EnvVar {
                    name: var_name,
                    value: EnvValue::PodIpFieldRef,
                });
            } else {
                return Err(ManifestError::MissingField("container.env[].value"));
            }
        }
    }

    let container_port = match container.get("ports").and_then(Value::as_sequence) {
        None => None,
        Some(ports) => {
            if ports.len() > 1 {
                warnings.push("only the first containerPort is used".to_string());
            }
            ports
                .first()
                .and_then(Value::as_mapping)
                .and_then(|p| u64_field(p, "containerPort"))
                .map(|p| {
                    u16::try_from(p).map_err(|_| ManifestError::InvalidField {
                        field: "containerPort",
                        msg: format!("{p} out of range"),
                    })
                })
                .transpose()?
        }
    };

    let node_name = str_field(pod_spec, "nodeName").map(str::to_string);
    let host_network = pod_spec
        .get("hostNetwork")
        .and_then(Value::as_bool)
        .unwrap_or(false);
    let restart_policy = match str_field(pod_spec, "restartPolicy") {
        None | Some("Always") => RestartPolicy::Always,
        Some("Never") => RestartPolicy::Never,
        Some(other) => {
            return Err(ManifestError::InvalidField {
                field: "restartPolicy",
                msg: format!("unsupported policy `{other}`"),
            })
        }
    };

    Ok((
        DeploymentSpec {
            name,
            replicas: replicas as u32,
            node_name,
            host_network,
            image,
            args,
            env,
            container_port,
            restart_policy,
        },
        warnings,
    ))
}

/// Parses a manifest, discarding warnings.
pub fn parse_deployment(text: &str) -> Result<DeploymentSpec, ManifestError> {
    parse_deployment_with_warnings(text).map(|(spec, _)| spec)
}

fn map_field<'a>(map: &'a serde_yaml::Mapping, key: &str) -> Option<&'a serde_yaml::Mapping> {
    map.get(key).and_then(Value::as_mapping)
}

fn str_field<'a>(map: &'a serde_yaml::Mapping, key: &str) -> Option<&'a str> {
    map.get(key).and_then(Value::as_str)
}

fn u64_field(map: &serde_yaml::Mapping, key: &str) -> Option<u64> {
    map.get(key).and_then(Value::as_u64)
}

fn warn_unknown(
    map: &serde_yaml::Mapping,
    known: &[&str],
    prefix: &str,
    warnings: &mut Vec<String>,
) {
    for key in map.keys() {
        if let Some(key) = key.as_str() {
            if !known.contains(&key) {
                warnings.push(format!("ignored field {prefix}{key}"));
            }
        }
    }
}
