//! Stderr logging. `UCE_LOG` selects verbosity (default `warn`);
//! `--json-logs` switches each record to a single JSON object per line so
//! log processors never have to parse free-form text.

use std::io::Write;

pub fn init(json: bool) {
    let env = env_logger::Env::new().filter_or("UCE_LOG", "warn");
    let mut builder = env_logger::Builder::from_env(env);
    builder.target(env_logger::Target::Stderr);
    if json {
        builder.format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().to_string().to_lowercase(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    // Tests may initialize more than once; later calls keep the first config.
    let _ = builder.try_init();
}
