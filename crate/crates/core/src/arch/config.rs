use crate::dsp::DspConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Musicnn,
    Vgg,
}

/// Temporal summarisation head of a musicnn model. Ignored by vgg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    TemporalPooling,
    Attention,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Musicnn => "musicnn",
            Family::Vgg => "vgg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "musicnn" => Some(Family::Musicnn),
            "vgg" => Some(Family::Vgg),
            _ => None,
        }
    }
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::TemporalPooling => "temporal_pooling",
            Backend::Attention => "attention",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "temporal_pooling" => Some(Backend::TemporalPooling),
            "attention" => Some(Backend::Attention),
            _ => None,
        }
    }
}

/// Time extent of every timbral kernel.
pub const TIMBRAL_KERNEL_FRAMES: usize = 7;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    pub backend: Backend,
    pub n_tags: usize,
    pub dsp: DspConfig,
    /// Timbral kernel heights as fractions of `n_mels`.
    pub timbral_filter_heights: Vec<f64>,
    pub timbral_channels: usize,
    /// Temporal kernel lengths in frames; odd so padding is symmetric.
    pub temporal_filter_lengths: Vec<usize>,
    pub temporal_channels: usize,
    pub midend_channels: usize,
    pub midend_kernel: usize,
    pub penultimate_units: usize,
    pub vgg_block_channels: Vec<usize>,
    pub vgg_pool_shapes: Vec<(usize, usize)>,
    /// Zero frames appended to a vgg input patch so the pools divide it.
    pub vgg_pad_frames: usize,
    pub bn_epsilon: f64,
}

impl ModelConfig {
    /// Full-size musicnn.
    pub fn musicnn(n_tags: usize) -> Self {
        Self {
            family: Family::Musicnn,
            backend: Backend::TemporalPooling,
            n_tags,
            dsp: DspConfig::default(),
            timbral_filter_heights: vec![0.9, 0.4],
            timbral_channels: 51,
            temporal_filter_lengths: vec![165, 129, 65, 33],
            temporal_channels: 8,
            midend_channels: 64,
            midend_kernel: 7,
            penultimate_units: 200,
            vgg_block_channels: vec![],
            vgg_pool_shapes: vec![],
            vgg_pad_frames: 0,
            bn_epsilon: 1e-3,
        }
    }

    pub fn musicnn_big(n_tags: usize) -> Self {
        Self {
            midend_channels: 512,
            penultimate_units: 500,
            ..Self::musicnn(n_tags)
        }
    }

    /// Full-size vgg baseline. Patches are padded from 187 to 192 frames.
    pub fn vgg(n_tags: usize) -> Self {
        Self {
            family: Family::Vgg,
            backend: Backend::TemporalPooling,
            n_tags,
            dsp: DspConfig::default(),
            timbral_filter_heights: vec![],
            timbral_channels: 0,
            temporal_filter_lengths: vec![],
            temporal_channels: 0,
            midend_channels: 0,
            midend_kernel: 0,
            penultimate_units: 0,
            vgg_block_channels: vec![32, 64, 96, 128, 128],
            vgg_pool_shapes: vec![(2, 2), (2, 2), (2, 2), (4, 4), (6, 3)],
            vgg_pad_frames: 5,
            bn_epsilon: 1e-3,
        }
    }

    /// 24-frame, 16-band front-end used by the desk-scale tests.
    pub fn toy_dsp() -> DspConfig {
        DspConfig {
            n_mels: 16,
            fft_size: 512,
            patch_frames: 24,
            patch_hop_frames: 24,
            ..DspConfig::default()
        }
    }

    pub fn toy_musicnn(backend: Backend, n_tags: usize) -> Self {
        Self {
            backend,
            dsp: Self::toy_dsp(),
            timbral_filter_heights: vec![0.5],
            timbral_channels: 3,
            temporal_filter_lengths: vec![9],
            temporal_channels: 2,
            midend_channels: 4,
            midend_kernel: 3,
            penultimate_units: 6,
            ..Self::musicnn(n_tags)
        }
    }

    pub fn toy_vgg(n_tags: usize) -> Self {
        Self {
            dsp: Self::toy_dsp(),
            vgg_block_channels: vec![2, 3, 3, 4, 4],
            vgg_pool_shapes: vec![(2, 2), (2, 2), (2, 2), (1, 1), (3, 2)],
            vgg_pad_frames: 0,
            ..Self::vgg(n_tags)
        }
    }

    /// Frequency extent of each timbral kernel: `round(fraction · n_mels)`.
    pub fn timbral_kernel_widths(&self) -> Vec<usize> {
        self.timbral_filter_heights
            .iter()
            .map(|f| (f * self.dsp.n_mels as f64).round() as usize)
            .collect()
    }

    pub fn timbral_total_channels(&self) -> usize {
        self.timbral_channels * self.timbral_filter_heights.len()
    }

    pub fn temporal_total_channels(&self) -> usize {
        self.temporal_channels * self.temporal_filter_lengths.len()
    }

    pub fn frontend_channels(&self) -> usize {
        self.timbral_total_channels() + self.temporal_total_channels()
    }

    /// Channels of the back-end input: front-end plus the three mid-end maps.
    pub fn stack_channels(&self) -> usize {
        self.frontend_channels() + 3 * self.midend_channels
    }

    pub fn vgg_input_frames(&self) -> usize {
        self.dsp.patch_frames + self.vgg_pad_frames
    }

    /// Spatial extent after the last vgg pool.
    pub fn vgg_final_extent(&self) -> (usize, usize) {
        let (ph, pw) = self
            .vgg_pool_shapes
            .iter()
            .fold((1, 1), |(a, b), &(h, w)| (a * h, b * w));
        (self.vgg_input_frames() / ph, self.dsp.n_mels / pw)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        self.dsp.validate()?;
        if self.n_tags == 0 {
            return fail("n_tags must be at least 1".into());
        }
        if !(self.bn_epsilon > 0.0) {
            return fail("bn_epsilon must be positive".into());
        }
        match self.family {
            Family::Musicnn => self.validate_musicnn(),
            Family::Vgg => self.validate_vgg(),
        }
    }

    fn validate_musicnn(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.timbral_filter_heights.is_empty() && self.temporal_filter_lengths.is_empty() {
            return fail("musicnn needs at least one timbral or temporal filter".into());
        }
        for (&f, k) in self
            .timbral_filter_heights
            .iter()
            .zip(self.timbral_kernel_widths())
        {
            if !(f > 0.0 && f <= 1.0) {
                return fail(format!("timbral fraction {f} outside (0, 1]"));
            }
            if k == 0 {
                return fail(format!("timbral fraction {f} rounds to an empty kernel"));
            }
        }
        if !self.timbral_filter_heights.is_empty() && self.timbral_channels == 0 {
            return fail("timbral_channels must be at least 1".into());
        }
        for &l in &self.temporal_filter_lengths {
            if l % 2 == 0 {
                return fail(format!("temporal filter length {l} must be odd"));
            }
        }
        if !self.temporal_filter_lengths.is_empty() && self.temporal_channels == 0 {
            return fail("temporal_channels must be at least 1".into());
        }
        if self.midend_channels == 0 {
            return fail("midend_channels must be at least 1".into());
        }
        if self.midend_kernel.is_multiple_of(2) {
            return fail(format!("midend_kernel {} must be odd", self.midend_kernel));
        }
        if self.penultimate_units == 0 {
            return fail("penultimate_units must be at least 1".into());
        }
        Ok(())
    }

    fn validate_vgg(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.vgg_block_channels.len() != 5 || self.vgg_pool_shapes.len() != 5 {
            return fail(format!(
                "vgg needs exactly 5 blocks, got {} channel counts and {} pool shapes",
                self.vgg_block_channels.len(),
                self.vgg_pool_shapes.len()
            ));
        }
        if self.vgg_block_channels.contains(&0) {
            return fail("vgg block channels must be positive".into());
        }
        let (ph, pw) = self
            .vgg_pool_shapes
            .iter()
            .fold((1, 1), |(a, b), &(h, w)| (a * h, b * w));
        if ph == 0 || pw == 0 {
            return fail("vgg pool shapes must be positive".into());
        }
        let frames = self.vgg_input_frames();
        if !frames.is_multiple_of(ph) {
            return fail(format!(
                "vgg pool heights multiply to {ph}, which does not divide {frames} input frames"
            ));
        }
        if !self.dsp.n_mels.is_multiple_of(pw) {
            return fail(format!(
                "vgg pool widths multiply to {pw}, which does not divide {} mel bands",
                self.dsp.n_mels
            ));
        }
        Ok(())
    }
}
