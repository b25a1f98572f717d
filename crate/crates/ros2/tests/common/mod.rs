//! Shared test harness: an in-thread engine over a temp pool plus client
//! session helpers.

#![allow(dead_code)]

use std::sync::Arc;

use ros2::auth::Secret;
use ros2::clock::{monotonic, Clock};
use ros2::client::{ClientConfig, ClientSession};
use ros2::engine::{self, EngineConfig, EngineHandle};
use ros2::tenancy::TenantRegistry;
use ros2_core::rpc::ProviderKind;

pub const SECRET_A: Secret = [0xA1; 32];
pub const SECRET_B: Secret = [0xB2; 32];
pub const TENANT_A: u64 = 1;
pub const TENANT_B: u64 = 2;

pub struct TestEngine {
    pub handle: EngineHandle,
    pub dir: tempfile::TempDir,
    pub clock: Clock,
}

pub fn registry_two_tenants() -> TenantRegistry {
    let mut reg = TenantRegistry::new();
    reg.insert("alice", SECRET_A, None).unwrap();
    reg.insert("bob", SECRET_B, None).unwrap();
    reg
}

pub fn start_engine() -> TestEngine {
    start_engine_with(registry_two_tenants(), monotonic(), 256 << 20)
}

pub fn start_engine_with(reg: TenantRegistry, clock: Clock, nvme_bytes: u64) -> TestEngine {
    let dir = tempfile::tempdir().unwrap();
    let cfg = EngineConfig {
        listen_ctrl: "127.0.0.1:0".into(),
        listen_data: "127.0.0.1:0".into(),
        scm_bytes: 128 << 20,
        nvme_path: dir.path().join("pool0.img"),
        nvme_bytes,
        providers: vec![ProviderKind::Stream, ProviderKind::RdmaSim],
        eager_threshold: 16 * 1024,
        session_workers: 4,
    };
    let handle = engine::start(cfg, reg, clock.clone()).unwrap();
    TestEngine { handle, dir, clock }
}

pub fn client_config(engine: &TestEngine, provider: ProviderKind, tenant: u64) -> ClientConfig {
    ClientConfig {
        ctrl_addr: engine.handle.ctrl_addr.clone(),
        data_addr: engine.handle.data_addr.clone(),
        provider,
        tenant_id: tenant,
        secret: if tenant == TENANT_A { SECRET_A } else { SECRET_B },
        buffer_len: 1 << 20,
        buffer_count: 8,
    }
}

pub fn connect(engine: &TestEngine, provider: ProviderKind, tenant: u64) -> Arc<ClientSession> {
    ClientSession::connect(&client_config(engine, provider, tenant), engine.clock.clone()).unwrap()
}

pub fn providers() -> [ProviderKind; 2] {
    [ProviderKind::Stream, ProviderKind::RdmaSim]
}
