use std::io::Write;

use anyhow::{anyhow, Result};
use vpsim_server::{AdapterMode, ServiceConfig};

use crate::args::{AdapterChoice, ServeArgs};
use crate::output::Output;

pub fn run(args: ServeArgs) -> Result<Output> {
    let mut config = ServiceConfig::load(args.config.as_deref())?;
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if let Some(dir) = args.data_dir {
        config.data_dir = dir;
    }
    if let Some(kb) = args.kb {
        config.kb_path = Some(kb);
    }
    if let Some(a) = args.adapters {
        config.adapter.mode = match a {
            AdapterChoice::Mock => AdapterMode::Mock,
            AdapterChoice::Remote => AdapterMode::Remote,
        };
    }
    config.validate()?;

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(vpsim_server::serve(config, |addr| {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "listening on http://{addr}");
        let _ = out.flush();
    }))
    .map_err(|e| anyhow!(e))?;
    Ok(Output::default())
}
