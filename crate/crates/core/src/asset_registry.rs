//! Six-level physical asset hierarchy with lifecycle states, device
//! identities, and effective attribute resolution.
//!
//! Every node sits exactly one level below its parent, so each root-to-leaf
//! path visits strictly descending levels and the forest is at most six deep.
//! Attribute resolution walks that path and lets the deeper node win on a
//! name collision.
//!
//! Reads go through [`Hierarchy`] snapshots. Mutations copy-on-write the
//! shared map, so a snapshot taken before a relocation never observes it.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attrs::{AttrMap, AttrValue};

/// Attribute names a Sensor node must carry.
pub const SENSOR_REQUIRED_ATTRS: [&str; 3] = ["measurement_type", "units", "sample_rate_hz"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssetId(pub String);

impl AssetId {
    pub fn new(id: impl Into<String>) -> Self {
        AssetId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Enterprise,
    Site,
    Line,
    Asset,
    Component,
    Sensor,
}

impl Level {
    pub const ALL: [Level; 6] = [
        Level::Enterprise,
        Level::Site,
        Level::Line,
        Level::Asset,
        Level::Component,
        Level::Sensor,
    ];

    /// Depth below the enterprise root, 0..=5.
    pub fn depth(self) -> usize {
        self as usize
    }

    /// The level a parent of this level must have.
    pub fn parent_level(self) -> Option<Level> {
        match self {
            Level::Enterprise => None,
            other => Some(Level::ALL[other.depth() - 1]),
        }
    }

    /// Lower-case name used to qualify inherited attributes (`site.jurisdiction`).
    pub fn key(self) -> &'static str {
        match self {
            Level::Enterprise => "enterprise",
            Level::Site => "site",
            Level::Line => "line",
            Level::Asset => "asset",
            Level::Component => "component",
            Level::Sensor => "sensor",
        }
    }

    pub fn parse(s: &str) -> Option<Level> {
        Level::ALL
            .into_iter()
            .find(|l| l.key().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssetLifecycle {
    Commissioning,
    Operation,
    Maintenance,
    Decommissioning,
}

impl AssetLifecycle {
    pub fn can_transition_to(self, target: AssetLifecycle) -> bool {
        use AssetLifecycle::*;
        self == target
            || matches!(
                (self, target),
                (Commissioning, Operation)
                    | (Operation, Maintenance)
                    | (Maintenance, Operation)
                    | (Operation, Decommissioning)
            )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AssetLifecycle::Commissioning => "Commissioning",
            AssetLifecycle::Operation => "Operation",
            AssetLifecycle::Maintenance => "Maintenance",
            AssetLifecycle::Decommissioning => "Decommissioning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetNode {
    pub id: AssetId,
    pub level: Level,
    #[serde(default)]
    pub parent: Option<AssetId>,
    #[serde(default)]
    pub attributes: AttrMap,
    #[serde(default = "default_lifecycle")]
    pub lifecycle: AssetLifecycle,
}

fn default_lifecycle() -> AssetLifecycle {
    AssetLifecycle::Commissioning
}

impl AssetNode {
    pub fn new(id: impl Into<String>, level: Level, parent: Option<&str>) -> Self {
        AssetNode {
            id: AssetId::new(id),
            level,
            parent: parent.map(AssetId::new),
            attributes: AttrMap::new(),
            lifecycle: AssetLifecycle::Operation,
        }
    }

    pub fn with_attr(mut self, name: &str, value: impl Into<AttrValue>) -> Self {
        self.attributes.insert(name.to_string(), value.into());
        self
    }

    pub fn with_lifecycle(mut self, lifecycle: AssetLifecycle) -> Self {
        self.lifecycle = lifecycle;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceState {
    Provisioned,
    Commissioned,
    Active,
    Suspended,
    Revoked,
}

impl DeviceState {
    pub fn can_transition_to(self, target: DeviceState) -> bool {
        use DeviceState::*;
        matches!(
            (self, target),
            (Provisioned, Commissioned)
                | (Commissioned, Active)
                | (Active, Suspended)
                | (Suspended, Active)
                | (Suspended, Revoked)
        )
    }
}

/// Keyed digest of a device's shared secret. The secret itself is never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CredentialDigest(pub String);

impl CredentialDigest {
    pub fn derive(device_id: &str, secret: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"govfabric-device-credential\x00");
        h.update(device_id.as_bytes());
        h.update(b"\x00");
        h.update(secret.as_bytes());
        CredentialDigest(hex::encode(h.finalize()))
    }

    fn matches(&self, other: &CredentialDigest) -> bool {
        let (a, b) = (self.0.as_bytes(), other.0.as_bytes());
        a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceIdentity {
    pub device_id: String,
    pub asset_ref: AssetId,
    pub credential: CredentialDigest,
    pub state: DeviceState,
}

impl DeviceIdentity {
    pub fn new(device_id: &str, asset_ref: &str, secret: &str, state: DeviceState) -> Self {
        DeviceIdentity {
            device_id: device_id.to_string(),
            asset_ref: AssetId::new(asset_ref),
            credential: CredentialDigest::derive(device_id, secret),
            state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssetError {
    #[error("asset id {0} already registered")]
    DuplicateId(AssetId),
    #[error("{child:?} node {id} cannot sit under {parent:?}")]
    LevelMismatch {
        id: AssetId,
        child: Level,
        parent: Option<Level>,
    },
    #[error("unknown parent {0}")]
    UnknownParent(AssetId),
    #[error("unknown asset node {0}")]
    UnknownNode(AssetId),
    #[error("moving {id} under {new_parent} would create a cycle")]
    CycleDetected { id: AssetId, new_parent: AssetId },
    #[error("illegal lifecycle transition {from:?} -> {to:?}")]
    IllegalTransition {
        from: AssetLifecycle,
        to: AssetLifecycle,
    },
    #[error("illegal device transition {from:?} -> {to:?}")]
    IllegalDeviceTransition { from: DeviceState, to: DeviceState },
    #[error("sensor {id} is missing attribute {attr}")]
    MissingSensorAttribute { id: AssetId, attr: &'static str },
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("device {0} already registered")]
    DuplicateDevice(String),
    #[error("credential rejected for device {0}")]
    BadCredential(String),
}

/// Emitted on lifecycle or location changes so policy decisions can be
/// re-evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegistryEvent {
    LifecycleChanged {
        id: AssetId,
        from: AssetLifecycle,
        to: AssetLifecycle,
    },
    Relocated {
        id: AssetId,
        from: Option<AssetId>,
        to: AssetId,
    },
    DeviceStateChanged {
        device_id: String,
        from: DeviceState,
        to: DeviceState,
    },
    CredentialRotated {
        device_id: String,
    },
}

/// Attributes resolved along a node's lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAttributes {
    pub id: AssetId,
    pub level: Level,
    /// Union of attributes from root to node; deeper levels win on collision.
    pub attributes: AttrMap,
    /// Root-first lineage ending in the node itself.
    pub lineage: Vec<AssetId>,
    /// Attributes qualified by the level that declared them (`site.jurisdiction`).
    pub qualified: AttrMap,
    pub lifecycle: AssetLifecycle,
}

impl EffectiveAttributes {
    /// Flattens into the attribute map exposed to policies under the `asset` root:
    /// plain names, level-qualified names, plus `id`, `level`, and `lifecycle`.
    pub fn to_policy_attrs(&self) -> AttrMap {
        let mut out = self.attributes.clone();
        out.extend(self.qualified.clone());
        out.insert("id".into(), AttrValue::Str(self.id.0.clone()));
        out.insert("level".into(), AttrValue::Str(self.level.key().into()));
        out.insert(
            "lifecycle".into(),
            AttrValue::Str(self.lifecycle.as_str().into()),
        );
        out
    }

    pub fn jurisdiction(&self) -> Option<&str> {
        self.attributes.get("jurisdiction").and_then(AttrValue::as_str)
    }

    /// The ancestor at `level`, if the lineage reaches it.
    pub fn ancestor_at(&self, level: Level) -> Option<&AssetId> {
        self.lineage.get(level.depth())
    }
}

/// Immutable view of the asset forest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    nodes: BTreeMap<AssetId, AssetNode>,
}

impl Hierarchy {
    pub fn get(&self, id: &AssetId) -> Option<&AssetNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &AssetId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &AssetNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children<'a>(&'a self, id: &'a AssetId) -> impl Iterator<Item = &'a AssetNode> + 'a {
        self.nodes
            .values()
            .filter(move |n| n.parent.as_ref() == Some(id))
    }

    /// Root-first path ending at `id`.
    pub fn lineage(&self, id: &AssetId) -> Result<Vec<&AssetNode>, AssetError> {
        let mut path = Vec::new();
        let mut cur = self
            .nodes
            .get(id)
            .ok_or_else(|| AssetError::UnknownNode(id.clone()))?;
        loop {
            path.push(cur);
            match &cur.parent {
                Some(p) => {
                    cur = self
                        .nodes
                        .get(p)
                        .ok_or_else(|| AssetError::UnknownParent(p.clone()))?;
                }
                None => break,
            }
            if path.len() > Level::ALL.len() {
                return Err(AssetError::CycleDetected {
                    id: id.clone(),
                    new_parent: cur.id.clone(),
                });
            }
        }
        path.reverse();
        Ok(path)
    }

    pub fn is_descendant(&self, candidate: &AssetId, ancestor: &AssetId) -> bool {
        self.lineage(candidate)
            .map(|path| path.iter().any(|n| &n.id == ancestor))
            .unwrap_or(false)
    }

    pub fn resolve_effective_attributes(
        &self,
        id: &AssetId,
    ) -> Result<EffectiveAttributes, AssetError> {
        let path = self.lineage(id)?;
        let mut attributes = AttrMap::new();
        let mut qualified = AttrMap::new();
        for node in &path {
            for (k, v) in &node.attributes {
                attributes.insert(k.clone(), v.clone());
                qualified.insert(format!("{}.{k}", node.level.key()), v.clone());
            }
        }
        let node = path.last().expect("lineage includes the node");
        Ok(EffectiveAttributes {
            id: node.id.clone(),
            level: node.level,
            attributes,
            lineage: path.iter().map(|n| n.id.clone()).collect(),
            qualified,
            lifecycle: node.lifecycle,
        })
    }

    /// Checks the structural invariants: parents exist, levels step by one,
    /// roots are Enterprise nodes.
    pub fn check_invariants(&self) -> Result<(), AssetError> {
        for node in self.nodes.values() {
            match (&node.parent, node.level.parent_level()) {
                (None, None) => {}
                (Some(p), Some(expected)) => {
                    let parent = self
                        .nodes
                        .get(p)
                        .ok_or_else(|| AssetError::UnknownParent(p.clone()))?;
                    if parent.level != expected {
                        return Err(AssetError::LevelMismatch {
                            id: node.id.clone(),
                            child: node.level,
                            parent: Some(parent.level),
                        });
                    }
                }
                (_, _) => {
                    return Err(AssetError::LevelMismatch {
                        id: node.id.clone(),
                        child: node.level,
                        parent: None,
                    })
                }
            }
        }
        Ok(())
    }
}

/// Mutable registry of assets and devices. Serializes as its fleet
/// definition; pending events are not persisted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "FleetDefinition", into = "FleetDefinition")]
pub struct AssetRegistry {
    hierarchy: Arc<Hierarchy>,
    devices: BTreeMap<String, DeviceIdentity>,
    events: Vec<RegistryEvent>,
}

impl AssetRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cheap immutable snapshot for in-flight evaluations.
    pub fn snapshot(&self) -> Arc<Hierarchy> {
        Arc::clone(&self.hierarchy)
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn get(&self, id: &AssetId) -> Option<&AssetNode> {
        self.hierarchy.get(id)
    }

    pub fn register_node(&mut self, node: AssetNode) -> Result<AssetId, AssetError> {
        if self.hierarchy.contains(&node.id) {
            return Err(AssetError::DuplicateId(node.id));
        }
        self.check_placement(&node, node.parent.as_ref())?;
        if node.level == Level::Sensor {
            for attr in SENSOR_REQUIRED_ATTRS {
                if !node.attributes.contains_key(attr) {
                    return Err(AssetError::MissingSensorAttribute {
                        id: node.id.clone(),
                        attr,
                    });
                }
            }
        }
        let id = node.id.clone();
        Arc::make_mut(&mut self.hierarchy)
            .nodes
            .insert(id.clone(), node);
        debug_assert!(self.hierarchy.check_invariants().is_ok());
        Ok(id)
    }

    fn check_placement(&self, node: &AssetNode, parent: Option<&AssetId>) -> Result<(), AssetError> {
        match (parent, node.level.parent_level()) {
            (None, None) => Ok(()),
            (Some(p), expected) => {
                let parent = self
                    .hierarchy
                    .get(p)
                    .ok_or_else(|| AssetError::UnknownParent(p.clone()))?;
                if Some(parent.level) != expected {
                    return Err(AssetError::LevelMismatch {
                        id: node.id.clone(),
                        child: node.level,
                        parent: Some(parent.level),
                    });
                }
                Ok(())
            }
            (None, Some(_)) => Err(AssetError::LevelMismatch {
                id: node.id.clone(),
                child: node.level,
                parent: None,
            }),
        }
    }

    /// Moves `id` under `new_parent`. The id is kept; inherited attributes
    /// follow the new lineage on the next resolution.
    pub fn relocate_node(
        &mut self,
        id: &AssetId,
        new_parent: &AssetId,
    ) -> Result<AssetNode, AssetError> {
        let node = self
            .hierarchy
            .get(id)
            .ok_or_else(|| AssetError::UnknownNode(id.clone()))?
            .clone();
        if !self.hierarchy.contains(new_parent) {
            return Err(AssetError::UnknownNode(new_parent.clone()));
        }
        if node.level == Level::Enterprise {
            return Err(AssetError::LevelMismatch {
                id: id.clone(),
                child: node.level,
                parent: self.hierarchy.get(new_parent).map(|p| p.level),
            });
        }
        if new_parent == id || self.hierarchy.is_descendant(new_parent, id) {
            return Err(AssetError::CycleDetected {
                id: id.clone(),
                new_parent: new_parent.clone(),
            });
        }
        self.check_placement(&node, Some(new_parent))?;
        let old_parent = node.parent.clone();
        let hierarchy = Arc::make_mut(&mut self.hierarchy);
        let stored = hierarchy.nodes.get_mut(id).expect("checked above");
        stored.parent = Some(new_parent.clone());
        let updated = stored.clone();
        self.events.push(RegistryEvent::Relocated {
            id: id.clone(),
            from: old_parent,
            to: new_parent.clone(),
        });
        debug_assert!(self.hierarchy.check_invariants().is_ok());
        Ok(updated)
    }

    pub fn transition_asset_lifecycle(
        &mut self,
        id: &AssetId,
        target: AssetLifecycle,
    ) -> Result<AssetNode, AssetError> {
        let current = self
            .hierarchy
            .get(id)
            .ok_or_else(|| AssetError::UnknownNode(id.clone()))?
            .lifecycle;
        if !current.can_transition_to(target) {
            return Err(AssetError::IllegalTransition {
                from: current,
                to: target,
            });
        }
        if current == target {
            return Ok(self.hierarchy.get(id).cloned().expect("present"));
        }
        let stored = Arc::make_mut(&mut self.hierarchy)
            .nodes
            .get_mut(id)
            .expect("present");
        stored.lifecycle = target;
        let updated = stored.clone();
        self.events.push(RegistryEvent::LifecycleChanged {
            id: id.clone(),
            from: current,
            to: target,
        });
        Ok(updated)
    }

    /// Replaces a component in place: the id is inherited and only the
    /// supplied installation metadata changes. Sensors under it keep their ids.
    pub fn replace_component(
        &mut self,
        id: &AssetId,
        installation: AttrMap,
    ) -> Result<AssetNode, AssetError> {
        let node = self
            .hierarchy
            .get(id)
            .ok_or_else(|| AssetError::UnknownNode(id.clone()))?;
        if node.level != Level::Component {
            return Err(AssetError::LevelMismatch {
                id: id.clone(),
                child: node.level,
                parent: node.level.parent_level(),
            });
        }
        let stored = Arc::make_mut(&mut self.hierarchy)
            .nodes
            .get_mut(id)
            .expect("present");
        stored.attributes.extend(installation);
        Ok(stored.clone())
    }

    pub fn resolve_effective_attributes(
        &self,
        id: &AssetId,
    ) -> Result<EffectiveAttributes, AssetError> {
        self.hierarchy.resolve_effective_attributes(id)
    }

    pub fn register_device(&mut self, device: DeviceIdentity) -> Result<String, AssetError> {
        if !self.hierarchy.contains(&device.asset_ref) {
            return Err(AssetError::UnknownNode(device.asset_ref));
        }
        if self.devices.contains_key(&device.device_id) {
            return Err(AssetError::DuplicateDevice(device.device_id));
        }
        let id = device.device_id.clone();
        self.devices.insert(id.clone(), device);
        Ok(id)
    }

    pub fn device(&self, device_id: &str) -> Option<&DeviceIdentity> {
        self.devices.get(device_id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceIdentity> {
        self.devices.values()
    }

    /// True iff the presented secret matches and the device is Active.
    /// A wrong secret is an error regardless of state.
    pub fn check_device_admission(
        &self,
        device_id: &str,
        presented_secret: &str,
    ) -> Result<bool, AssetError> {
        let device = self
            .devices
            .get(device_id)
            .ok_or_else(|| AssetError::UnknownDevice(device_id.to_string()))?;
        let presented = CredentialDigest::derive(device_id, presented_secret);
        if !device.credential.matches(&presented) {
            return Err(AssetError::BadCredential(device_id.to_string()));
        }
        Ok(device.state == DeviceState::Active)
    }

    pub fn transition_device(
        &mut self,
        device_id: &str,
        target: DeviceState,
    ) -> Result<DeviceState, AssetError> {
        let device = self
            .devices
            .get_mut(device_id)
            .ok_or_else(|| AssetError::UnknownDevice(device_id.to_string()))?;
        if device.state == target {
            return Ok(target);
        }
        if !device.state.can_transition_to(target) {
            return Err(AssetError::IllegalDeviceTransition {
                from: device.state,
                to: target,
            });
        }
        let from = device.state;
        device.state = target;
        self.events.push(RegistryEvent::DeviceStateChanged {
            device_id: device_id.to_string(),
            from,
            to: target,
        });
        Ok(target)
    }

    /// Walks the device to Revoked through Suspended when needed.
    pub fn revoke_device(&mut self, device_id: &str) -> Result<DeviceState, AssetError> {
        let state = self
            .devices
            .get(device_id)
            .ok_or_else(|| AssetError::UnknownDevice(device_id.to_string()))?
            .state;
        if state == DeviceState::Active {
            self.transition_device(device_id, DeviceState::Suspended)?;
        }
        self.transition_device(device_id, DeviceState::Revoked)
    }

    /// Replaces the credential; the previous secret stops working immediately.
    pub fn rotate_credential(&mut self, device_id: &str, new_secret: &str) -> Result<(), AssetError> {
        let device = self
            .devices
            .get_mut(device_id)
            .ok_or_else(|| AssetError::UnknownDevice(device_id.to_string()))?;
        device.credential = CredentialDigest::derive(device_id, new_secret);
        self.events.push(RegistryEvent::CredentialRotated {
            device_id: device_id.to_string(),
        });
        Ok(())
    }

    pub fn drain_events(&mut self) -> Vec<RegistryEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn to_fleet(&self) -> FleetDefinition {
        let mut nodes: Vec<AssetNode> = self.hierarchy.nodes.values().cloned().collect();
        nodes.sort_by(|a, b| a.level.cmp(&b.level).then_with(|| a.id.cmp(&b.id)));
        FleetDefinition {
            nodes,
            devices: self.devices.values().cloned().collect(),
        }
    }

    pub fn from_fleet(fleet: &FleetDefinition) -> Result<Self, AssetError> {
        let mut reg = AssetRegistry::new();
        let mut nodes = fleet.nodes.clone();
        nodes.sort_by_key(|n| n.level);
        for node in nodes {
            reg.register_node(node)?;
        }
        for device in &fleet.devices {
            reg.register_device(device.clone())?;
        }
        Ok(reg)
    }
}

impl TryFrom<FleetDefinition> for AssetRegistry {
    type Error = AssetError;

    fn try_from(fleet: FleetDefinition) -> Result<Self, AssetError> {
        AssetRegistry::from_fleet(&fleet)
    }
}

impl From<AssetRegistry> for FleetDefinition {
    fn from(reg: AssetRegistry) -> Self {
        reg.to_fleet()
    }
}

/// The fleet definition file: nodes and devices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FleetDefinition {
    pub nodes: Vec<AssetNode>,
    #[serde(default)]
    pub devices: Vec<DeviceIdentity>,
}
