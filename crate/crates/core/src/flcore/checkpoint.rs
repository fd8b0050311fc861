//! Bit-exact binary checkpoints of the experiment state: config digest,
//! round, global flat parameters, and per-client flat parameters plus
//! replay caches.

use super::FlError;
use crate::data::Example;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 8] = b"DCFLCKP1";

#[derive(Debug, Clone, PartialEq)]
pub struct ClientSnapshot {
    pub client_id: u64,
    pub target_params: Vec<f64>,
    pub diffusion_params: Vec<f64>,
    pub replay_cache: Vec<Example>,
    pub seen_labels: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_digest: u64,
    pub round: u64,
    pub global_params: Vec<f64>,
    pub clients: Vec<ClientSnapshot>,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), FlError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    write_u64(&mut buf, checkpoint.config_digest);
    write_u64(&mut buf, checkpoint.round);
    write_f64_vec(&mut buf, &checkpoint.global_params);
    write_u64(&mut buf, checkpoint.clients.len() as u64);
    for client in &checkpoint.clients {
        write_u64(&mut buf, client.client_id);
        write_f64_vec(&mut buf, &client.target_params);
        write_f64_vec(&mut buf, &client.diffusion_params);
        write_u64(&mut buf, client.replay_cache.len() as u64);
        for ex in &client.replay_cache {
            write_f64_vec(&mut buf, &ex.features);
            write_u64(&mut buf, ex.label as u64);
            write_u64(&mut buf, ex.domain as u64);
        }
        write_u64(&mut buf, client.seen_labels.len() as u64);
        for &(class, domain) in &client.seen_labels {
            write_u64(&mut buf, class);
            write_u64(&mut buf, domain);
        }
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| FlError::Checkpoint(format!("create {}: {e}", path.display())))?;
    file.write_all(&buf)
        .map_err(|e| FlError::Checkpoint(format!("write {}: {e}", path.display())))?;
    Ok(())
}

/// Loads a checkpoint, rejecting it when the embedded config digest differs
/// from `expected_digest`.
pub fn load_checkpoint(path: &Path, expected_digest: u64) -> Result<Checkpoint, FlError> {
    let bytes = std::fs::read(path)
        .map_err(|e| FlError::Checkpoint(format!("read {}: {e}", path.display())))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(FlError::Checkpoint("bad magic".into()));
    }
    let config_digest = r.u64()?;
    if config_digest != expected_digest {
        return Err(FlError::Checkpoint(format!(
            "config digest mismatch: checkpoint {config_digest:#x}, expected {expected_digest:#x}"
        )));
    }
    let round = r.u64()?;
    let global_params = r.f64_vec()?;
    let num_clients = r.u64()? as usize;
    let mut clients = Vec::with_capacity(num_clients);
    for _ in 0..num_clients {
        let client_id = r.u64()?;
        let target_params = r.f64_vec()?;
        let diffusion_params = r.f64_vec()?;
        let cache_len = r.u64()? as usize;
        let mut replay_cache = Vec::with_capacity(cache_len);
        for _ in 0..cache_len {
            let features = r.f64_vec()?;
            let label = r.u64()? as usize;
            let domain = r.u64()? as usize;
            replay_cache.push(Example {
                features,
                label,
                domain,
            });
        }
        let seen_len = r.u64()? as usize;
        let mut seen_labels = Vec::with_capacity(seen_len);
        for _ in 0..seen_len {
            let class = r.u64()?;
            let domain = r.u64()?;
            seen_labels.push((class, domain));
        }
        clients.push(ClientSnapshot {
            client_id,
            target_params,
            diffusion_params,
            replay_cache,
            seen_labels,
        });
    }
    if r.pos != bytes.len() {
        return Err(FlError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        config_digest,
        round,
        global_params,
        clients,
    })
}

fn write_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_f64_vec(buf: &mut Vec<u8>, v: &[f64]) {
    write_u64(buf, v.len() as u64);
    for &x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FlError> {
        if self.pos + n > self.bytes.len() {
            return Err(FlError::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, FlError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self) -> Result<Vec<f64>, FlError> {
        let len = self.u64()? as usize;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(f64::from_le_bytes(self.take(8)?.try_into().unwrap()));
        }
        Ok(out)
    }
}
