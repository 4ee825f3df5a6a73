//! Startup and shutdown of the `serve` subcommand.

use anyhow::{Context, Result};
use magnitude::data::{load_csv, load_points_csv, LabelColumn};
use magnitude::{ALConfig, ALSession};
use tower_http::cors::CorsLayer;

use crate::args::ServeArgs;
use crate::serve::{router, AppState};

/// Builds the session described by `args`, either fresh or from `--resume`.
pub fn build_session(args: &ServeArgs) -> Result<ALSession> {
    if let Some(path) = &args.resume {
        let text = std::fs::read_to_string(path)
            .map_err(magnitude::Error::from)
            .with_context(|| format!("--resume {}", path.display()))?;
        return ALSession::from_checkpoint(&text).with_context(|| format!("--resume {}", path.display()));
    }
    let pool_path = args.pool.as_ref().context("--pool is required")?;
    let ignore = args.ignore_column.as_deref().map(str::parse::<LabelColumn>).transpose()?;
    let pool = load_points_csv(pool_path, ignore.as_ref()).with_context(|| format!("--pool {}", pool_path.display()))?;
    let test = match &args.test {
        Some(path) => Some(
            load_csv(path, &args.test_label_column.parse()?).with_context(|| format!("--test {}", path.display()))?,
        ),
        None => None,
    };
    let label_names = match (&test, &args.classes) {
        (_, Some(names)) => names.clone(),
        (Some(t), None) => t.label_names.clone(),
        (None, None) => anyhow::bail!(magnitude::Error::invalid("--classes is required without --test")),
    };
    let config = ALConfig {
        strategy: args.strategy.into(),
        gamma: args.gamma,
        lambda: args.lambda,
        batch: args.batch,
        budget: args.budget,
        seed: args.seed,
    };
    Ok(ALSession::new(pool, label_names, test, &[], config)?)
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let session = build_session(args)?;
    let state = AppState::new(session, args.checkpoint.clone());
    let mut app = router(state.clone());
    if args.cors {
        app = app.layer(CorsLayer::permissive());
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.addr)
            .await
            .map_err(magnitude::Error::from)
            .with_context(|| format!("--addr {}", args.addr))?;
        log::info!("serving on http://{}/v1", listener.local_addr()?);
        eprintln!("serving on http://{}/v1", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                tokio::signal::ctrl_c().await.ok();
            })
            .await?;
        if let Some(path) = state.save_checkpoint().await.map_err(|e| anyhow::anyhow!("{e:?}"))? {
            eprintln!("session saved to {}", path.display());
        }
        Ok(())
    })
}
