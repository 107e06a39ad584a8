//! Governance engine for industrial IoT telemetry.
//!
//! Data contracts, layered policy-as-code, asset-centric access control,
//! canonical mapping, and quality SLAs, enforced at the ingestion,
//! publication, access, and external-sharing boundaries.

pub mod asset_registry;
pub mod attrs;
pub mod boundary;
pub mod contract;
pub mod mapping;
pub mod policy;
pub mod privacy;
pub mod quality;
pub mod validation;
