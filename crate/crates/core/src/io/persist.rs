//! Binary chain storage.
//!
//! A chain store is a directory holding one columnar binary file per chain
//! plus a small JSON manifest naming them. The binary layout is versioned,
//! little-endian, and carries floats bit-for-bit, so a reloaded chain
//! compares equal to the one that was saved and every posterior summary
//! recomputes identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GlobalParams, ModelSpec};
use crate::sampler::{Block, ChainDraws, ChainOutput, StepSizes};

const MAGIC: [u8; 4] = *b"PKCH";
const VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// Index file of a chain store directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStoreManifest {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub n_persons: usize,
    pub n_items: usize,
    pub total_iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub files: Vec<String>,
}

fn persist_err(message: impl Into<String>) -> Error {
    Error::Persist(message.into())
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    Ok(w.write_all(s.as_bytes())?)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_len(r: &mut impl Read, what: &str) -> Result<usize> {
    let len = read_u64(r)?;
    // A draw matrix larger than this would not fit in memory anyway; the
    // bound keeps a corrupted length field from looking like a huge
    // allocation request.
    if len > (1 << 40) {
        return Err(persist_err(format!("implausible {what} length {len}")));
    }
    Ok(len as usize)
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1024 {
        return Err(persist_err(format!("implausible string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| persist_err("string field is not UTF-8"))
}

fn write_f64_slice(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for &v in values {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_f64_vec(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

fn read_u8_vec(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut out = vec![0u8; len];
    r.read_exact(&mut out)?;
    Ok(out)
}

/// Serialize one chain to a self-describing binary file.
pub fn write_chain(path: &Path, chain: &ChainOutput) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_str(&mut w, chain.spec.name())?;
    let d = &chain.draws;
    write_u64(&mut w, d.n_persons as u64)?;
    write_u64(&mut w, d.n_items as u64)?;
    write_u64(&mut w, chain.total_iters as u64)?;
    write_u64(&mut w, chain.burn_in as u64)?;
    write_u64(&mut w, chain.seed)?;
    write_u64(&mut w, chain.stream_id)?;
    write_u64(&mut w, d.n_draws as u64)?;
    write_u64(&mut w, chain.deviance.len() as u64)?;

    write_f64_slice(&mut w, &chain.deviance)?;
    write_f64_slice(&mut w, &d.theta)?;
    write_f64_slice(&mut w, &d.tau)?;
    w.write_all(&d.xi)?;
    write_f64_slice(&mut w, &d.beta)?;
    write_f64_slice(&mut w, &d.alpha)?;
    w.write_all(&d.eta)?;
    for g in &d.globals {
        for k in 0..GlobalParams::N_COMPONENTS {
            write_f64(&mut w, g.component(k))?;
        }
    }

    write_u32(&mut w, chain.acceptance.len() as u32)?;
    for (block, rate) in &chain.acceptance {
        write_str(&mut w, block.name())?;
        write_f64(&mut w, *rate)?;
    }
    let s = &chain.final_steps;
    write_f64_slice(
        &mut w,
        &[s.theta, s.tau, s.beta, s.alpha, s.delta, s.gamma, s.pi1, s.pi2],
    )?;
    w.flush()?;
    Ok(())
}

/// Read one chain file back; the inverse of [`write_chain`].
pub fn read_chain(path: &Path) -> Result<ChainOutput> {
    let file = File::open(path)
        .map_err(|e| persist_err(format!("cannot open {}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(persist_err(format!(
            "{} is not a chain file (bad leading bytes)",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(persist_err(format!(
            "chain file version {version} is not supported (expected {VERSION})"
        )));
    }
    let spec = ModelSpec::parse(&read_str(&mut r)?)?;
    let n_persons = read_len(&mut r, "person")?;
    let n_items = read_len(&mut r, "item")?;
    let total_iters = read_len(&mut r, "iteration")?;
    let burn_in = read_len(&mut r, "burn-in")?;
    let seed = read_u64(&mut r)?;
    let stream_id = read_u64(&mut r)?;
    let n_draws = read_len(&mut r, "draw")?;
    let n_dev = read_len(&mut r, "deviance")?;

    let deviance = read_f64_vec(&mut r, n_dev)?;
    let theta = read_f64_vec(&mut r, n_draws * n_persons)?;
    let tau = read_f64_vec(&mut r, n_draws * n_persons)?;
    let xi = read_u8_vec(&mut r, n_draws * n_persons)?;
    let beta = read_f64_vec(&mut r, n_draws * n_items)?;
    let alpha = read_f64_vec(&mut r, n_draws * n_items)?;
    let eta = read_u8_vec(&mut r, n_draws * n_items)?;
    let mut globals = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let mut g = GlobalParams::zeroed();
        for k in 0..GlobalParams::N_COMPONENTS {
            g.set_component(k, read_f64(&mut r)?);
        }
        globals.push(g);
    }

    let n_acceptance = read_u32(&mut r)? as usize;
    let mut acceptance = Vec::with_capacity(n_acceptance);
    for _ in 0..n_acceptance {
        let block = Block::parse(&read_str(&mut r)?)?;
        acceptance.push((block, read_f64(&mut r)?));
    }
    let steps = read_f64_vec(&mut r, 8)?;
    let final_steps = StepSizes {
        theta: steps[0],
        tau: steps[1],
        beta: steps[2],
        alpha: steps[3],
        delta: steps[4],
        gamma: steps[5],
        pi1: steps[6],
        pi2: steps[7],
    };

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(persist_err(format!(
            "{} has trailing bytes after the chain payload",
            path.display()
        )));
    }
    if total_iters < burn_in || n_draws != total_iters - burn_in || n_dev != total_iters {
        return Err(persist_err(format!(
            "inconsistent chain counts: {total_iters} iterations, {burn_in} burn-in, \
             {n_draws} draws, {n_dev} deviance entries"
        )));
    }

    Ok(ChainOutput {
        spec,
        seed,
        stream_id,
        total_iters,
        burn_in,
        deviance,
        draws: ChainDraws {
            n_persons,
            n_items,
            n_draws,
            theta,
            tau,
            xi,
            beta,
            alpha,
            eta,
            globals,
        },
        acceptance,
        final_steps,
    })
}

/// Write every chain of a run into `dir` along with a manifest.
pub fn save_chains(dir: &Path, chains: &[ChainOutput]) -> Result<ChainStoreManifest> {
    let first = chains
        .first()
        .ok_or_else(|| persist_err("refusing to save an empty chain set"))?;
    for c in chains {
        if c.spec != first.spec
            || c.draws.n_persons != first.draws.n_persons
            || c.draws.n_items != first.draws.n_items
            || c.total_iters != first.total_iters
        {
            return Err(persist_err(
                "chains in one store must share a model, data shape, and length",
            ));
        }
    }
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(chains.len());
    for (k, chain) in chains.iter().enumerate() {
        let name = format!("chain_{k:03}.bin");
        write_chain(&dir.join(&name), chain)?;
        files.push(name);
    }
    let manifest = ChainStoreManifest {
        format: "chain-store".to_string(),
        version: VERSION,
        model: first.spec.name().to_string(),
        n_persons: first.draws.n_persons,
        n_items: first.draws.n_items,
        total_iters: first.total_iters,
        burn_in: first.burn_in,
        seed: first.seed,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join(MANIFEST_NAME), json + "\n")?;
    Ok(manifest)
}

/// Load every chain listed in a store directory's manifest.
pub fn load_chains(dir: &Path) -> Result<Vec<ChainOutput>> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        persist_err(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let manifest: ChainStoreManifest = serde_json::from_str(&text)?;
    if manifest.format != "chain-store" || manifest.version != VERSION {
        return Err(persist_err(format!(
            "unsupported chain store: format '{}' version {}",
            manifest.format, manifest.version
        )));
    }
    let mut chains = Vec::with_capacity(manifest.files.len());
    for name in &manifest.files {
        let chain = read_chain(&dir.join(name))?;
        if chain.spec.name() != manifest.model
            || chain.draws.n_persons != manifest.n_persons
            || chain.draws.n_items != manifest.n_items
        {
            return Err(persist_err(format!(
                "{name} does not match the manifest it is listed in"
            )));
        }
        chains.push(chain);
    }
    if chains.is_empty() {
        return Err(persist_err("chain store manifest lists no files"));
    }
    Ok(chains)
}

/// Paths a store would occupy, used to refuse accidental overwrites.
pub fn store_paths(dir: &Path, n_chains: usize) -> Vec<PathBuf> {
    let mut paths = vec![dir.join(MANIFEST_NAME)];
    for k in 0..n_chains {
        paths.push(dir.join(format!("chain_{k:03}.bin")));
    }
    paths
}
