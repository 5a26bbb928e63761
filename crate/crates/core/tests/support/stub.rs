//! HTTP clients wired to an in-process fixture server.

use std::collections::BTreeMap;
use std::sync::Arc;

use coat_core::agents::Role;
use coat_core::backends::{BackendConfig, Backends, FixtureServer, FixtureStore, HttpBackend, ScriptedBackend, ServerOptions};

use super::manifest_entries;

pub const MODELS: [(&str, Role); 3] =
    [("witness-vl", Role::Witness), ("detective-llm", Role::Detective), ("supervisor-llm", Role::Supervisor)];

pub fn server(store: FixtureStore, options: ServerOptions) -> FixtureServer {
    let models: BTreeMap<String, Role> = MODELS.iter().map(|(m, r)| (m.to_string(), *r)).collect();
    let media = manifest_entries().iter().map(|e| e.media()).collect();
    FixtureServer::start(Arc::new(ScriptedBackend::new(store)), models, media, options).unwrap()
}

pub fn client(server: &FixtureServer, role: Role, tweak: impl Fn(&mut BackendConfig)) -> HttpBackend {
    let model = MODELS.iter().find(|(_, r)| *r == role).unwrap().0;
    let mut cfg = BackendConfig::new(server.base_url(), model);
    cfg.retry_backoff_ms = 1;
    tweak(&mut cfg);
    HttpBackend::new(cfg).unwrap()
}

pub fn http_backends(server: &FixtureServer) -> Backends {
    Backends {
        witness: Arc::new(client(server, Role::Witness, |_| {})),
        detective: Arc::new(client(server, Role::Detective, |_| {})),
        supervisor: Arc::new(client(server, Role::Supervisor, |_| {})),
    }
}
