//! Generator/discriminator assembly and the GmDn general/specific split.
//!
//! Both networks are organized in groups, one per feature-map size. The
//! generator's general part is its last `m` groups (nearest the image); the
//! discriminator's is its first `n` groups (nearest the image). Everything
//! else, plus both FC layers, is the target-specific part.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{Dense, FilterBank, MappingMlp, Resample, ResidualBlock, StyleBlock, LEAKY_SLOPE};
use crate::modulation::Scheme;
use crate::params::{Bound, Builder, Net, ParamStore};
use crate::tensor::Tensor;

/// Network shape hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub resolution: usize,
    pub image_channels: usize,
    pub latent_dim: usize,
    pub style_dim: usize,
    pub mapping_depth: usize,
    /// Channel width at full resolution; halved-resolution groups double it.
    pub base_width: usize,
    pub max_width: usize,
    pub blocks_per_group: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            image_channels: 3,
            latent_dim: 64,
            style_dim: 64,
            mapping_depth: 8,
            base_width: 32,
            max_width: 256,
            blocks_per_group: 1,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 || !self.resolution.is_power_of_two() {
            return Err(Error::Config(format!("resolution must be a power of two >= 16, got {}", self.resolution)));
        }
        if !matches!(self.image_channels, 1 | 3) {
            return Err(Error::Config(format!("image channels must be 1 or 3, got {}", self.image_channels)));
        }
        for (k, v) in [
            ("latent_dim", self.latent_dim),
            ("style_dim", self.style_dim),
            ("mapping_depth", self.mapping_depth),
            ("base_width", self.base_width),
            ("max_width", self.max_width),
            ("blocks_per_group", self.blocks_per_group),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of groups in each network: one per resolution from 4×4 up,
    /// plus a final group at full resolution.
    pub fn group_count(&self) -> usize {
        (self.resolution / 4).trailing_zeros() as usize + 2
    }

    fn width_at(&self, res: usize) -> usize {
        (self.base_width * self.resolution / res).min(self.max_width)
    }

    /// Feature-map size of each generator group (output side).
    pub fn gen_group_resolutions(&self) -> Vec<usize> {
        let g = self.group_count();
        (0..g).map(|k| if k + 1 == g { self.resolution } else { 4 << k }).collect()
    }

    pub fn gen_group_widths(&self) -> Vec<usize> {
        self.gen_group_resolutions().into_iter().map(|r| self.width_at(r)).collect()
    }

    /// Feature-map size each discriminator group operates at (input side).
    pub fn disc_group_resolutions(&self) -> Vec<usize> {
        let g = self.group_count();
        (0..g).map(|k| if k == 0 { self.resolution } else { self.resolution >> (k - 1) }).collect()
    }

    pub fn disc_group_widths(&self) -> Vec<usize> {
        self.disc_group_resolutions().into_iter().map(|r| self.width_at(r)).collect()
    }

    /// Short fingerprint of the shape-determining fields.
    pub fn hash(&self) -> u64 {
        // FNV-1a over the canonical field list
        let s = format!(
            "res={};ch={};z={};w={};map={};base={};max={};bpg={}",
            self.resolution,
            self.image_channels,
            self.latent_dim,
            self.style_dim,
            self.mapping_depth,
            self.base_width,
            self.max_width,
            self.blocks_per_group
        );
        s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x1000_0000_01b3))
    }
}

/// Which generator head sits in front of the general part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Source-architecture head: FC + residual group at 4×4.
    Large,
    /// FC + two style blocks fed by a mapping MLP.
    Tailored,
}

/// `GmDn`: freeze the last `m` generator groups and first `n` discriminator groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModelPartition {
    pub m: usize,
    pub n: usize,
}

impl ModelPartition {
    pub fn new(m: usize, n: usize) -> Self {
        Self { m, n }
    }
}

impl std::fmt::Display for ModelPartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "G{}D{}", self.m, self.n)
    }
}

#[derive(Debug, Clone)]
pub enum GenGroup {
    Residual(Vec<ResidualBlock>),
    Style(Vec<StyleBlock>),
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub head: Head,
    pub latent_dim: usize,
    pub fc: Dense,
    pub base_shape: [usize; 3],
    pub mapping: Option<MappingMlp>,
    pub groups: Vec<GenGroup>,
    pub to_image: FilterBank,
}

impl Generator {
    fn build(arch: &ArchConfig, head: Head, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let widths = arch.gen_group_widths();
        let g = widths.len();
        let w0 = widths[0];
        let mut bld = Builder { store, rng, net: Net::Gen, group: None };
        let fc = Dense::new(&mut bld, "gen/fc", arch.latent_dim, w0 * 16, true)?;
        let mapping = match head {
            Head::Tailored => Some(MappingMlp::new(&mut bld, "gen/mapping", arch.latent_dim, arch.style_dim, arch.mapping_depth)?),
            Head::Large => None,
        };
        let mut groups = Vec::with_capacity(g);
        for k in 0..g {
            bld.group = Some(k + 1);
            let name = |b: usize| format!("gen/group{}/block{}", k + 1, b + 1);
            if k == 0 {
                groups.push(match head {
                    Head::Large => GenGroup::Residual(
                        (0..arch.blocks_per_group)
                            .map(|b| ResidualBlock::new(&mut bld, &name(b), w0, w0, Resample::None))
                            .collect::<Result<_>>()?,
                    ),
                    Head::Tailored => GenGroup::Style(
                        (0..2).map(|b| StyleBlock::new(&mut bld, &name(b), w0, w0, arch.style_dim)).collect::<Result<_>>()?,
                    ),
                });
                continue;
            }
            let up = if k + 1 < g { Resample::Up } else { Resample::None };
            let blocks = (0..arch.blocks_per_group)
                .map(|b| {
                    if b == 0 {
                        ResidualBlock::new(&mut bld, &name(b), widths[k - 1], widths[k], up)
                    } else {
                        ResidualBlock::new(&mut bld, &name(b), widths[k], widths[k], Resample::None)
                    }
                })
                .collect::<Result<_>>()?;
            groups.push(GenGroup::Residual(blocks));
        }
        bld.group = Some(g);
        let to_image = FilterBank::new(&mut bld, &format!("gen/group{g}/to_image"), widths[g - 1], arch.image_channels, 3)?;
        Ok(Self { head, latent_dim: arch.latent_dim, fc, base_shape: [w0, 4, 4], mapping, groups, to_image })
    }

    /// Number of style inputs consumed (0 for the large head).
    pub fn style_block_count(&self) -> usize {
        match &self.groups[0] {
            GenGroup::Style(b) => b.len(),
            GenGroup::Residual(_) => 0,
        }
    }

    /// Style vector `w = mapping(z)`, when the head has a mapping MLP.
    pub fn style(&self, p: &Bound, z: &Tensor) -> Result<Option<Tensor>> {
        self.mapping.as_ref().map(|m| m.forward(p, z)).transpose()
    }

    pub fn forward(&self, p: &Bound, z: &Tensor) -> Result<Tensor> {
        let styles = match self.style(p, z)? {
            Some(w) => vec![w; self.style_block_count()],
            None => Vec::new(),
        };
        self.forward_with_styles(p, z, &styles)
    }

    /// Generates from `z` with an explicit style input per style block.
    pub fn forward_with_styles(&self, p: &Bound, z: &Tensor, styles: &[Tensor]) -> Result<Tensor> {
        if z.ndim() != 2 || z.shape()[1] != self.latent_dim {
            return Err(Error::Config(format!("latent must be N×{}, got {:?}", self.latent_dim, z.shape())));
        }
        if styles.len() != self.style_block_count() {
            return Err(Error::Config(format!("{} style inputs given, {} expected", styles.len(), self.style_block_count())));
        }
        let n = z.shape()[0];
        let [c, h, w] = self.base_shape;
        let mut x = self.fc.forward(p, z)?.reshape(&[n, c, h, w])?;
        for group in &self.groups {
            match group {
                GenGroup::Residual(blocks) => {
                    for b in blocks {
                        x = b.forward(p, &x)?;
                    }
                }
                GenGroup::Style(blocks) => {
                    for (b, s) in blocks.iter().zip(styles) {
                        x = b.forward(p, &x, s)?;
                    }
                }
            }
        }
        Ok(self.to_image.forward(p, &x.leaky_relu(LEAKY_SLOPE))?.tanh())
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub from_image: FilterBank,
    pub groups: Vec<Vec<ResidualBlock>>,
    pub fc: Dense,
    pub image_shape: [usize; 3],
}

impl Discriminator {
    fn build(arch: &ArchConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let res = arch.disc_group_resolutions();
        let widths = arch.disc_group_widths();
        let g = res.len();
        let mut bld = Builder { store, rng, net: Net::Disc, group: Some(1) };
        let from_image = FilterBank::new(&mut bld, "disc/group1/from_image", arch.image_channels, widths[0], 3)?;
        let mut groups = Vec::with_capacity(g);
        for k in 0..g {
            bld.group = Some(k + 1);
            let down = if k > 0 && res[k] > 4 { Resample::Down } else { Resample::None };
            let cin = if k == 0 { widths[0] } else { widths[k - 1] };
            let blocks = (0..arch.blocks_per_group)
                .map(|b| {
                    let name = format!("disc/group{}/block{}", k + 1, b + 1);
                    let last = b + 1 == arch.blocks_per_group;
                    let (ci, rs) = (if b == 0 { cin } else { widths[k] }, if last { down } else { Resample::None });
                    ResidualBlock::new(&mut bld, &name, ci, widths[k], rs)
                })
                .collect::<Result<_>>()?;
            groups.push(blocks);
        }
        bld.group = None;
        let fc = Dense::new(&mut bld, "disc/fc", widths[g - 1] * 16, 1, true)?;
        Ok(Self { from_image, groups, fc, image_shape: [arch.image_channels, arch.resolution, arch.resolution] })
    }

    /// One logit per image, shape `[N]`.
    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        if x.ndim() != 4 || x.shape()[1..] != self.image_shape {
            return Err(Error::Config(format!("discriminator expects N×{:?} images, got {:?}", self.image_shape, x.shape())));
        }
        let n = x.shape()[0];
        let mut h = self.from_image.forward(p, x)?;
        for blocks in &self.groups {
            for b in blocks {
                h = b.forward(p, &h)?;
            }
        }
        let h = h.leaky_relu(LEAKY_SLOPE);
        let flat = h.reshape(&[n, h.numel() / n])?;
        Ok(self.fc.forward(p, &flat)?.reshape(&[n])?)
    }
}

/// Generator and discriminator sharing one parameter registry.
#[derive(Debug, Clone)]
pub struct Gan {
    pub arch: ArchConfig,
    pub store: ParamStore,
    pub gen: Generator,
    pub disc: Discriminator,
    pub partition: ModelPartition,
    pub scheme: Scheme,
}

/// One row of [`Gan::list_parameters`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub numel: usize,
    pub frozen: bool,
}

impl Gan {
    /// Builds both networks with freshly initialized parameters.
    pub fn build(arch: &ArchConfig, head: Head, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let gen = Generator::build(arch, head, &mut store, &mut rng)?;
        let disc = Discriminator::build(arch, &mut store, &mut rng)?;
        Ok(Self { arch: arch.clone(), store, gen, disc, partition: ModelPartition::default(), scheme: Scheme::None })
    }

    pub fn group_counts(&self) -> (usize, usize) {
        (self.gen.groups.len(), self.disc.groups.len())
    }

    /// Freezes the general part and, for AdaFM/FS, attaches identity
    /// modulation to every frozen generator filter bank.
    pub fn apply_partition(&mut self, p: ModelPartition, scheme: Scheme) -> Result<()> {
        let (gg, dg) = self.group_counts();
        if p.m > gg || p.n > dg {
            return Err(Error::Partition(format!("{p} out of range for a {gg}-group generator / {dg}-group discriminator")));
        }
        if self.store.modulators().next().is_some() {
            return Err(Error::Partition("partition already applied with modulation".into()));
        }
        if matches!(scheme, Scheme::WeightDemod) {
            return Err(Error::Partition("weight demodulation is not a transfer scheme".into()));
        }
        let mut frozen_banks = Vec::new();
        for id in 0..self.store.len() {
            let e = self.store.entry_mut(id);
            e.frozen = match (e.net, e.group) {
                (Net::Gen, Some(k)) => k + p.m > gg,
                (Net::Disc, Some(k)) => k <= p.n,
                _ => false,
            };
            if e.frozen && e.net == Net::Gen && e.kind == crate::params::ParamKind::ConvWeight {
                frozen_banks.push(id);
            }
        }
        if matches!(scheme, Scheme::AdaFm | Scheme::Fs) {
            for id in frozen_banks {
                self.store.attach_modulation(id, scheme)?;
            }
        }
        self.partition = p;
        self.scheme = scheme;
        Ok(())
    }

    pub fn list_parameters(&self) -> Vec<ParamInfo> {
        self.store
            .entries()
            .map(|(_, e)| ParamInfo { name: e.name.clone(), shape: e.shape.clone(), numel: e.numel(), frozen: e.frozen })
            .collect()
    }

    /// Generates images without recording a graph.
    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        let _g = crate::tensor::no_grad();
        self.gen.forward(&self.store.bind_const(), z)
    }
}
