//! Checkpoint files and the source → target parameter handoff.
//!
//! A checkpoint is a UTF-8 manifest followed by a payload of little-endian
//! f32 values. The manifest looks like
//!
//! ```text
//! adafm-checkpoint 1
//! arch_hash 9c1f0e2d3b4a5968
//! arch resolution=32 image_channels=3 ...
//! head tailored
//! scheme adafm
//! partition 4 2
//! tensor param gen/fc/W 64,4096 0 1 0
//! tensor optim gen/fc/W 64,4096 1048576 0 12
//! payload 123456
//! end
//! ```
//!
//! Each `tensor` line is `section name shape offset frozen step`, with byte
//! offsets into the payload. Optimizer entries store the first moment and
//! then the second moment back to back (twice the parameter's size).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use crate::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::model::{ArchConfig, Gan, Head, ModelPartition};
use crate::modulation::Scheme;
use crate::params::ParamEntry;
use crate::train::{AdamState, Moments};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "adafm-checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimSlot {
    pub name: String,
    pub moments: Moments,
}

/// In-memory form of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchConfig,
    pub head: Head,
    pub scheme: Scheme,
    pub partition: ModelPartition,
    /// In registry order, one per parameter.
    pub params: Vec<NamedTensor>,
    pub optim: Vec<OptimSlot>,
}

fn head_name(h: Head) -> &'static str {
    match h {
        Head::Large => "large",
        Head::Tailored => "tailored",
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::None => "none",
        Scheme::AdaFm => "adafm",
        Scheme::Fs => "fs",
        Scheme::WeightDemod => "weight_demod",
    }
}

fn arch_line(a: &ArchConfig) -> String {
    format!(
        "resolution={} image_channels={} latent_dim={} style_dim={} mapping_depth={} base_width={} max_width={} blocks_per_group={}",
        a.resolution, a.image_channels, a.latent_dim, a.style_dim, a.mapping_depth, a.base_width, a.max_width, a.blocks_per_group
    )
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse_arch(s: &str) -> Result<ArchConfig> {
    let mut a = ArchConfig::default();
    for kv in s.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("malformed arch field {kv:?}")))?;
        let v: usize = v.parse().map_err(|_| bad(format!("malformed arch value {kv:?}")))?;
        match k {
            "resolution" => a.resolution = v,
            "image_channels" => a.image_channels = v,
            "latent_dim" => a.latent_dim = v,
            "style_dim" => a.style_dim = v,
            "mapping_depth" => a.mapping_depth = v,
            "base_width" => a.base_width = v,
            "max_width" => a.max_width = v,
            "blocks_per_group" => a.blocks_per_group = v,
            _ => return Err(bad(format!("unknown arch field {k:?}"))),
        }
    }
    Ok(a)
}

impl Checkpoint {
    pub fn from_gan(gan: &Gan, adam: Option<&AdamState>) -> Self {
        let params = gan
            .store
            .entries()
            .map(|(_, e)| NamedTensor { name: e.name.clone(), shape: e.shape.clone(), data: e.data.clone(), frozen: e.frozen })
            .collect();
        let optim = adam
            .map(|a| a.slots.iter().map(|(&id, m)| OptimSlot { name: gan.store.entry(id).name.clone(), moments: m.clone() }).collect())
            .unwrap_or_default();
        Self { arch: gan.arch.clone(), head: gan.gen.head, scheme: gan.scheme, partition: gan.partition, params, optim }
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn param(&self, name: &str) -> Option<&NamedTensor> {
        self.params.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = format!(
            "{MAGIC} {FORMAT_VERSION}\narch_hash {:016x}\narch {}\nhead {}\nscheme {}\npartition {} {}\n",
            self.arch.hash(),
            arch_line(&self.arch),
            head_name(self.head),
            scheme_name(self.scheme),
            self.partition.m,
            self.partition.n
        );
        let mut payload: Vec<u8> = Vec::new();
        let shape_str = |s: &[usize]| s.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        for t in &self.params {
            manifest.push_str(&format!("tensor param {} {} {} {} 0\n", t.name, shape_str(&t.shape), payload.len(), u8::from(t.frozen)));
            payload.extend(t.data.iter().flat_map(|v| v.to_le_bytes()));
        }
        for s in &self.optim {
            let shape = &self.param(&s.name).map(|p| p.shape.clone()).unwrap_or_else(|| vec![s.moments.m.len()]);
            manifest.push_str(&format!("tensor optim {} {} {} 0 {}\n", s.name, shape_str(shape), payload.len(), s.moments.step));
            payload.extend(s.moments.m.iter().chain(&s.moments.v).flat_map(|v| v.to_le_bytes()));
        }
        manifest.push_str(&format!("payload {}\nend\n", payload.len()));
        let mut out = manifest.into_bytes();
        out.extend(payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const END: &[u8] = b"\nend\n";
        let split = bytes.windows(END.len()).position(|w| w == END).ok_or_else(|| bad("manifest terminator not found"))?;
        let manifest = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("manifest is not UTF-8"))?;
        let payload = &bytes[split + END.len()..];

        let mut lines = manifest.lines();
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key} line")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected {key} line, got {line:?}")))
        };
        let version: u32 = field(MAGIC)?.parse().map_err(|_| bad("bad version"))?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let hash = u64::from_str_radix(&field("arch_hash")?, 16).map_err(|_| bad("bad arch hash"))?;
        let arch = parse_arch(&field("arch")?)?;
        if arch.hash() != hash {
            return Err(bad(format!("architecture hash {hash:016x} does not match the recorded architecture ({:016x})", arch.hash())));
        }
        let head = match field("head")?.as_str() {
            "large" => Head::Large,
            "tailored" => Head::Tailored,
            h => return Err(bad(format!("unknown head {h:?}"))),
        };
        let scheme = match field("scheme")?.as_str() {
            "none" => Scheme::None,
            "adafm" => Scheme::AdaFm,
            "fs" => Scheme::Fs,
            "weight_demod" => Scheme::WeightDemod,
            s => return Err(bad(format!("unknown scheme {s:?}"))),
        };
        let part = field("partition")?;
        let pn: Vec<usize> = part.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad partition"))?;
        let [m, n] = pn[..] else { return Err(bad("bad partition")) };

        let mut params = Vec::new();
        let mut optim = Vec::new();
        let mut seen = HashSet::new();
        let mut expected_offset = 0usize;
        let mut declared = None;
        for line in lines {
            let parts: Vec<&str> = line.split(' ').collect();
            match parts[..] {
                ["tensor", section, name, shape, offset, frozen, step] => {
                    let shape: Vec<usize> = shape
                        .split(',')
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(format!("bad shape for {name}")))?;
                    let offset: usize = offset.parse().map_err(|_| bad(format!("bad offset for {name}")))?;
                    if offset != expected_offset {
                        return Err(bad(format!("{name}: offset {offset} breaks the contiguous layout (expected {expected_offset})")));
                    }
                    let numel: usize = shape.iter().product();
                    let count = if section == "optim" { 2 * numel } else { numel };
                    let end = offset + count * 4;
                    if end > payload.len() {
                        return Err(bad(format!("{name}: entry extends past the payload ({end} > {})", payload.len())));
                    }
                    expected_offset = end;
                    let data: Vec<f32> =
                        payload[offset..end].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
                    match section {
                        "param" => {
                            if !seen.insert(name.to_string()) {
                                return Err(bad(format!("duplicate tensor {name}")));
                            }
                            params.push(NamedTensor { name: name.into(), shape, data, frozen: frozen == "1" });
                        }
                        "optim" => {
                            let step = step.parse().map_err(|_| bad(format!("bad step for {name}")))?;
                            let (m, v) = data.split_at(numel);
                            optim.push(OptimSlot { name: name.into(), moments: Moments { m: m.to_vec(), v: v.to_vec(), step } });
                        }
                        _ => return Err(bad(format!("unknown section {section:?}"))),
                    }
                }
                ["payload", len] => declared = Some(len.parse::<usize>().map_err(|_| bad("bad payload length"))?),
                _ => return Err(bad(format!("unexpected manifest line {line:?}"))),
            }
        }
        let declared = declared.ok_or_else(|| bad("missing payload length"))?;
        if declared != payload.len() || expected_offset != payload.len() {
            return Err(bad(format!(
                "payload is {} bytes, manifest declares {declared} and its entries cover {expected_offset}",
                payload.len()
            )));
        }
        if let Some(s) = optim.iter().find(|s| !seen.contains(&s.name)) {
            return Err(bad(format!("optimizer state for unknown tensor {}", s.name)));
        }
        Ok(Self { arch, head, scheme, partition: ModelPartition::new(m, n), params, optim })
    }

    /// Rebuilds the model, verifying that every tensor matches the
    /// architecture's registry by name and shape.
    pub fn to_gan(&self) -> Result<Gan> {
        let mut gan = Gan::build(&self.arch, self.head, 0)?;
        if self.scheme != Scheme::None || self.partition != ModelPartition::default() {
            gan.apply_partition(self.partition, self.scheme)?;
        }
        let names: Vec<String> = gan.store.names().into_iter().map(String::from).collect();
        if names.len() != self.params.len() {
            return Err(bad(format!("checkpoint holds {} tensors, architecture has {}", self.params.len(), names.len())));
        }
        for t in &self.params {
            let id = gan.store.id(&t.name).ok_or_else(|| bad(format!("tensor {} is not part of the architecture", t.name)))?;
            let e = gan.store.entry_mut(id);
            if e.shape != t.shape {
                return Err(bad(format!("tensor {}: shape {:?} in checkpoint, {:?} in architecture", t.name, t.shape, e.shape)));
            }
            e.data.clone_from(&t.data);
            e.frozen = t.frozen;
        }
        Ok(gan)
    }

    /// Optimizer state keyed by the ids of `gan`'s registry.
    pub fn adam_state(&self, gan: &Gan) -> Result<AdamState> {
        let mut slots = BTreeMap::new();
        for s in &self.optim {
            let id = gan.store.id(&s.name).ok_or_else(|| bad(format!("optimizer state for unknown tensor {}", s.name)))?;
            slots.insert(id, s.moments.clone());
        }
        Ok(AdamState { slots })
    }
}

pub fn save_checkpoint(gan: &Gan, adam: Option<&AdamState>, path: &Path) -> Result<()> {
    std::fs::write(path, Checkpoint::from_gan(gan, adam).to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Copied bit-exactly from the source.
    Copied,
    /// Freshly initialized in the target.
    Reinitialized,
    /// Source tensor not used by the target.
    Skipped,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Copied => "copied",
            Action::Reinitialized => "reinitialized",
            Action::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferReport {
    pub mode: Mode,
    pub partition: ModelPartition,
    /// Target tensors in registry order, then skipped source tensors.
    pub entries: Vec<(String, Action)>,
}

impl TransferReport {
    pub fn names(&self, action: Action) -> Vec<&str> {
        self.entries.iter().filter(|(_, a)| *a == action).map(|(n, _)| n.as_str()).collect()
    }

    pub fn count(&self, action: Action) -> usize {
        self.entries.iter().filter(|(_, a)| *a == action).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,action\n");
        for (n, a) in &self.entries {
            s.push_str(&format!("{n},{a}\n"));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "transfer mode {} with partition {}: {} copied, {} reinitialized, {} skipped\n",
            self.mode,
            self.partition,
            self.count(Action::Copied),
            self.count(Action::Reinitialized),
            self.count(Action::Skipped)
        );
        for a in [Action::Copied, Action::Reinitialized, Action::Skipped] {
            s.push_str(&format!("\n[{a}]\n"));
            for n in self.names(a) {
                s.push_str(&format!("  {n}\n"));
            }
        }
        s
    }
}

/// Rejects a source whose architecture hash differs from `arch`.
pub fn check_arch(source: &Checkpoint, arch: &ArchConfig) -> Result<()> {
    let (have, want) = (source.arch.hash(), arch.hash());
    if have != want {
        return Err(bad(format!("source architecture hash {have:016x} does not match the configured {want:016x}")));
    }
    Ok(())
}

/// Builds the target model for `cfg.mode` and initializes it from `source`.
///
/// Every copy is validated before the target is touched, so a shape
/// mismatch leaves nothing half-initialized.
pub fn transfer_init(source: &Checkpoint, cfg: &RunConfig) -> Result<(Gan, TransferReport)> {
    let mode = cfg.mode;
    let mut gan = Gan::build(&cfg.arch(), mode.head(), cfg.seed)?;
    let partition = if mode.freezes() { cfg.partition() } else { ModelPartition::default() };
    if mode.freezes() {
        gan.apply_partition(partition, mode.scheme())?;
    }
    let copy = |e: &ParamEntry| match mode {
        Mode::Scratch => false,
        Mode::FinetuneAll => !e.head_fc,
        _ => e.frozen,
    };
    let src: HashMap<&str, &NamedTensor> = source.params.iter().map(|t| (t.name.as_str(), t)).collect();
    let mut plan = Vec::new();
    for (id, e) in gan.store.entries() {
        if !copy(e) {
            continue;
        }
        let t = src.get(e.name.as_str()).ok_or_else(|| bad(format!("source checkpoint has no tensor {}", e.name)))?;
        if t.shape != e.shape {
            return Err(bad(format!("tensor {}: source shape {:?} does not match target shape {:?}", e.name, t.shape, e.shape)));
        }
        plan.push((id, *t));
    }
    let mut used = HashSet::new();
    for (id, t) in plan {
        gan.store.entry_mut(id).data.clone_from(&t.data);
        used.insert(id);
    }
    let mut entries: Vec<(String, Action)> = gan
        .store
        .entries()
        .map(|(id, e)| (e.name.clone(), if used.contains(&id) { Action::Copied } else { Action::Reinitialized }))
        .collect();
    let copied: HashSet<&str> = entries.iter().filter(|(_, a)| *a == Action::Copied).map(|(n, _)| n.as_str()).collect();
    let skipped: Vec<String> = source.params.iter().filter(|t| !copied.contains(t.name.as_str())).map(|t| t.name.clone()).collect();
    entries.extend(skipped.into_iter().map(|n| (n, Action::Skipped)));
    Ok((gan, TransferReport { mode, partition, entries }))
}
