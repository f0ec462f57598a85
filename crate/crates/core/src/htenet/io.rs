use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{ModelConfig, UniMvt};
use crate::error::{Error, Result};

const MAGIC: &str = "unimvt-model 1";

/// Text form of a model: a magic line, the architecture as JSON, the
/// intensity bounds, then one `name=rows cols values...` line per tensor.
/// Floats use the shortest round-trip representation, so save/load is exact.
pub fn model_to_text(model: &UniMvt) -> Result<String> {
    let config = serde_json::to_string(&model.config).map_err(|e| Error::config(e.to_string()))?;
    let (lo, hi) = model.t_bounds();
    Ok(format!(
        "{MAGIC}\nconfig={config}\nt_min={lo}\nt_max={hi}\n{}",
        model.store.to_text()
    ))
}

pub fn model_from_text(text: &str) -> Result<UniMvt> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let bad = |line: usize, msg: &str| Error::config(format!("model file line {line}: {msg}"));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(bad(1, "missing model header")),
    }
    let mut field = |key: &str| -> Result<String> {
        let (n, l) = lines.next().ok_or_else(|| bad(0, "truncated model file"))?;
        l.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| bad(n, &format!("expected {key}=")))
    };
    let config: ModelConfig = serde_json::from_str(&field("config")?).map_err(|e| bad(2, &e.to_string()))?;
    let t_min: f64 = field("t_min")?.parse().map_err(|_| bad(3, "bad t_min"))?;
    let t_max: f64 = field("t_max")?.parse().map_err(|_| bad(4, "bad t_max"))?;
    let mut model = UniMvt::new(config, t_min, t_max, &mut ChaCha8Rng::seed_from_u64(0))?;
    model
        .store
        .load_values(lines.filter(|(_, l)| !l.trim().is_empty()))?;
    Ok(model)
}

pub fn save_model(model: &UniMvt, path: &Path) -> Result<()> {
    fs::write(path, model_to_text(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<UniMvt> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_text(&text)
}
