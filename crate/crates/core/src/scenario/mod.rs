//! File formats: scenarios (`.casts.xml`), ontologies (`.ont.xml`),
//! dependency sets (`.deps.xml` or line text) and the bundled fixtures.

mod deps;
pub mod fixtures;
mod protocol_xml;
pub(crate) mod xml;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use deps::{dependency_set_to_text, parse_dependency_set, serialize_dependency_set};
pub(crate) use protocol_xml::typed_value;
pub(crate) use deps::{conflict, parse_items, stage_of, write_conflict, write_items};

use crate::composition::{CompositionError, CompositionExpr, ServiceInstance, System};
use crate::dependency::{DependencySet, LabelDependency};
use crate::model::{validate_protocol, Protocol, ProtocolId, Value};
use crate::ontology::{Ontology, OntologyError};
use crate::semantics::{ActiveState, Environment};
use xml::{child, elements, flag, only, req, req_child, root, schema, version, Writer};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("{line}:{column} <{element}>: {message}")]
    Schema {
        line: u32,
        column: u32,
        element: String,
        message: String,
    },
    #[error("unsupported format version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: String },
    #[error("unresolved reference: {0}")]
    Reference(String),
    #[error("protocol `{protocol}` is not well formed: {diagnostics}")]
    Invalid { protocol: ProtocolId, diagnostics: String },
    #[error("{0}")]
    Content(String),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientDecl {
    pub protocol: Arc<Protocol>,
    /// Service the client talks to; `None` lets it use any unbound service.
    pub partner: Option<ProtocolId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDecl {
    pub protocol: Arc<Protocol>,
    /// One instance for all clients instead of one per client.
    pub shared: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub ontology: Ontology,
    pub composition: CompositionExpr,
    pub clients: Vec<ClientDecl>,
    pub services: Vec<ServiceDecl>,
    /// Extra initial bindings per protocol, on top of the context profile.
    pub initial: BTreeMap<ProtocolId, Environment>,
    /// Sets named by `||[file]` in the composition, as loaded.
    pub dependency_files: BTreeMap<String, DependencySet>,
}

impl Scenario {
    pub fn client(&self, id: &ProtocolId) -> Option<&Arc<Protocol>> {
        self.clients.iter().find(|c| &c.protocol.id == id).map(|c| &c.protocol)
    }

    pub fn service(&self, id: &ProtocolId) -> Option<&Arc<Protocol>> {
        self.services.iter().find(|c| &c.protocol.id == id).map(|c| &c.protocol)
    }

    pub fn protocol(&self, id: &ProtocolId) -> Option<&Arc<Protocol>> {
        self.client(id).or_else(|| self.service(id))
    }

    /// Context profile values plus the scenario's initial bindings.
    pub fn initial_env(&self, p: &Protocol) -> Environment {
        let mut env: Environment = p
            .context
            .attributes
            .iter()
            .map(|a| (a.name.clone(), a.value.clone()))
            .collect();
        for (k, v) in self.initial.get(&p.id).into_iter().flat_map(Environment::iter) {
            env = env.overload(k, v.clone());
        }
        env
    }

    /// Service instances: one per client naming a non-shared service as its
    /// partner (instance id `service@client`), one shared instance otherwise.
    pub fn service_instances(&self) -> Vec<ServiceInstance> {
        let mut out = Vec::new();
        for s in &self.services {
            let users: Vec<&ClientDecl> = self
                .clients
                .iter()
                .filter(|c| c.partner.as_ref() == Some(&s.protocol.id))
                .collect();
            let env = self.initial_env(&s.protocol);
            if s.shared || users.is_empty() {
                out.push(ServiceInstance {
                    state: ActiveState::initial(s.protocol.clone(), env),
                    client: None,
                });
            } else {
                for c in users {
                    out.push(ServiceInstance {
                        state: ActiveState::initial(s.protocol.clone(), env.clone())
                            .with_instance(format!("{}@{}", s.protocol.id, c.protocol.id)),
                        client: Some(c.protocol.id.clone()),
                    });
                }
            }
        }
        out
    }

    /// Composition with `deps` handed to its parallel nodes.
    pub fn composition_with(&self, deps: &BTreeSet<LabelDependency>) -> CompositionExpr {
        self.composition.with_dependencies(deps)
    }

    /// Executable system for the composition under `deps`.
    pub fn system(&self, deps: &BTreeSet<LabelDependency>) -> Result<System, CompositionError> {
        let clients: BTreeMap<ProtocolId, ActiveState> = self
            .clients
            .iter()
            .map(|c| {
                (
                    c.protocol.id.clone(),
                    ActiveState::initial(c.protocol.clone(), self.initial_env(&c.protocol)),
                )
            })
            .collect();
        System::new(&self.composition_with(deps), &clients, self.service_instances())
    }

    pub fn to_xml(&self) -> String {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.open("scenario", &[("version", FORMAT_VERSION), ("name", &self.name)]);
        write_ontology_body(w, &self.ontology, &[]);
        w.text("composition", &[], &self.composition.to_string());
        for (src, ds) in &self.dependency_files {
            write_items(w, ds, &[("src", src)]);
        }
        w.open("clients", &[]);
        for c in &self.clients {
            match &c.partner {
                Some(p) => protocol_xml::write_protocol(w, &c.protocol, &[("partner", p.as_str())]),
                None => protocol_xml::write_protocol(w, &c.protocol, &[]),
            }
        }
        w.close("clients");
        if self.services.is_empty() {
            w.empty("services", &[]);
        } else {
            w.open("services", &[]);
            for s in &self.services {
                let extra: &[(&str, &str)] = if s.shared { &[("shared", "true")] } else { &[] };
                protocol_xml::write_protocol(w, &s.protocol, extra);
            }
            w.close("services");
        }
        for (p, env) in &self.initial {
            if env.is_empty() {
                continue;
            }
            w.open("initial", &[("protocol", p.as_str())]);
            for (k, v) in env.iter() {
                let (ty, text) = (v.type_name(), v.to_text());
                w.empty("bind", &[("name", k), ("type", ty.as_str()), ("value", &text)]);
            }
            w.close("initial");
        }
        w.close("scenario");
    }

    /// Writes the scenario, inlining the ontology.
    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        write_atomic(path, self.to_xml().as_bytes())
    }
}

fn write_ontology_body(w: &mut Writer, o: &Ontology, attrs: &[(&str, &str)]) {
    let mut all = attrs.to_vec();
    all.push(("name", o.name()));
    w.open("ontology", &all);
    for c in o.concepts() {
        w.empty("concept", &[("name", c)]);
    }
    for (c, p) in o.subclass_of() {
        w.empty("subclassOf", &[("child", c), ("parent", p)]);
    }
    w.close("ontology");
}

fn ontology_from(node: roxmltree::Node) -> Result<Ontology, ScenarioError> {
    only(node, &["concept", "subclassOf"])?;
    let mut concepts = Vec::new();
    let mut edges = Vec::new();
    for c in elements(node) {
        if c.has_tag_name("concept") {
            concepts.push(req(c, "name")?.to_owned());
        } else {
            edges.push((req(c, "child")?.to_owned(), req(c, "parent")?.to_owned()));
        }
    }
    Ok(Ontology::new(req(node, "name")?, concepts, edges)?)
}

pub fn parse_ontology(text: &str) -> Result<Ontology, ScenarioError> {
    let doc = xml::parse(text)?;
    let r = root(&doc, "ontology")?;
    version(r, FORMAT_VERSION)?;
    ontology_from(r)
}

pub fn serialize_ontology(o: &Ontology) -> String {
    let mut w = Writer::new();
    write_ontology_body(&mut w, o, &[("version", FORMAT_VERSION)]);
    w.finish()
}

/// Resolves `<ontology src>` references.
pub type Resolver<'a> = dyn Fn(&str) -> Result<String, ScenarioError> + 'a;

pub(crate) fn no_files(src: &str) -> Result<String, ScenarioError> {
    Err(ScenarioError::Reference(format!(
        "ontology file `{src}` cannot be resolved here; inline the ontology or load from a path"
    )))
}

/// Parses a scenario whose ontology is inline.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_with(text, &no_files)
}

/// Reads a scenario file; ontology references are relative to its directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = read(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scenario_with(&text, &|src| read(&dir.join(src)))
}

pub(crate) fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ScenarioError> {
    let io = |e: std::io::Error| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io(e)
    })
}

pub fn parse_scenario_with(text: &str, resolve: &Resolver) -> Result<Scenario, ScenarioError> {
    let doc = xml::parse(text)?;
    scenario_from(root(&doc, "scenario")?, resolve)
}

pub(crate) fn scenario_from(r: roxmltree::Node, resolve: &Resolver) -> Result<Scenario, ScenarioError> {
    version(r, FORMAT_VERSION)?;
    only(r, &["ontology", "composition", "dependencies", "clients", "services", "initial"])?;
    let name = req(r, "name")?.to_owned();
    let onode = req_child(r, "ontology")?;
    let ontology = match onode.attribute("src") {
        Some(src) => {
            if elements(onode).next().is_some() {
                return Err(schema(onode, "an ontology is either referenced or inline, not both"));
            }
            parse_ontology(&resolve(src)?)?
        }
        None => ontology_from(onode)?,
    };
    let cnode = req_child(r, "composition")?;
    let composition =
        CompositionExpr::parse(cnode.text().unwrap_or("")).map_err(|e| schema(cnode, e.to_string()))?;
    let mut inline = BTreeMap::new();
    for n in elements(r).filter(|n| n.has_tag_name("dependencies")) {
        only(n, &["dep"])?;
        inline.insert(req(n, "src")?.to_owned(), n);
    }
    let mut dependency_files = BTreeMap::new();
    let composition = composition.resolve_sources(&mut |src| {
        let ds = match inline.get(src) {
            Some(n) => parse_items(*n, stage_of(*n)?)?,
            None => parse_dependency_set(&resolve(src)?)?,
        };
        let ld = match &ds {
            DependencySet::Selected(ld) | DependencySet::Extended(ld) => ld.clone(),
            other => {
                return Err(ScenarioError::Content(format!(
                    "`{src}` holds a {} set; a composition needs selected or extended dependencies",
                    other.stage().as_str()
                )))
            }
        };
        dependency_files.insert(src.to_owned(), ds);
        Ok(ld)
    })?;
    if let Some(src) = inline.keys().find(|k| !dependency_files.contains_key(*k)) {
        return Err(ScenarioError::Reference(format!("dependencies `{src}` are not used by the composition")));
    }

    let protocols = |tag: &str| -> Result<Vec<(Protocol, roxmltree::Node)>, ScenarioError> {
        let Some(n) = child(r, tag) else { return Ok(Vec::new()) };
        only(n, &["protocol"])?;
        elements(n)
            .map(|p| Ok((protocol_xml::parse_protocol(p)?, p)))
            .collect()
    };
    let client_nodes = protocols("clients")?;
    if client_nodes.is_empty() {
        return Err(ScenarioError::Content("at least one client protocol required".into()));
    }
    let service_nodes = protocols("services")?;

    let mut seen = BTreeSet::new();
    for (p, node) in client_nodes.iter().chain(&service_nodes) {
        if !seen.insert(p.id.clone()) {
            return Err(schema(*node, format!("duplicate protocol id `{}`", p.id)));
        }
        let d = validate_protocol(p);
        if !d.is_empty() {
            return Err(ScenarioError::Invalid {
                protocol: p.id.clone(),
                diagnostics: d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            });
        }
    }
    let service_ids: BTreeSet<&ProtocolId> = service_nodes.iter().map(|(p, _)| &p.id).collect();
    let mut clients = Vec::new();
    for (p, node) in &client_nodes {
        let partner = node.attribute("partner").map(ProtocolId::new);
        if let Some(s) = &partner {
            if !service_ids.contains(s) {
                return Err(ScenarioError::Reference(format!("partner `{s}` of `{}` is not a service", p.id)));
            }
        }
        clients.push(ClientDecl {
            protocol: Arc::new(p.clone()),
            partner,
        });
    }
    let services = service_nodes
        .iter()
        .map(|(p, node)| {
            Ok(ServiceDecl {
                protocol: Arc::new(p.clone()),
                shared: flag(*node, "shared")?,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    for leaf in composition.leaves() {
        if !clients.iter().any(|c| &c.protocol.id == leaf) {
            return Err(ScenarioError::Reference(format!("composition names unknown client `{leaf}`")));
        }
    }
    let mut initial: BTreeMap<ProtocolId, Environment> = BTreeMap::new();
    for n in elements(r).filter(|n| n.has_tag_name("initial")) {
        only(n, &["bind"])?;
        let pid = ProtocolId::new(req(n, "protocol")?);
        if !seen.contains(&pid) {
            return Err(ScenarioError::Reference(format!("initial bindings for unknown protocol `{pid}`")));
        }
        let mut env = initial.remove(&pid).unwrap_or_default();
        for b in elements(n) {
            let v: Value = protocol_xml::typed_value(b, "type", "value")?;
            env = env.overload(req(b, "name")?, v);
        }
        initial.insert(pid, env);
    }
    Ok(Scenario {
        name,
        ontology,
        composition,
        clients,
        services,
        initial,
        dependency_files,
    })
}
