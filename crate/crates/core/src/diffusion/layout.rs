//! Channel-concatenation conditioning.

use serde::{Deserialize, Serialize};

use super::codec::{LatentShape, LatentVideo};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    /// The latent being denoised.
    NoisyTarget,
    /// Latent of the conditioning video (flickering clip or naive composite).
    Input,
    /// Latent of the background video.
    Background,
    /// Patch-pooled mask or alpha, one channel.
    Mask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelGroup {
    pub kind: GroupKind,
    pub channels: usize,
}

/// Ordered channel groups that make up one denoiser input token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditioningLayout {
    groups: Vec<ChannelGroup>,
}

/// Conditioning tensors supplied alongside the noisy latent.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub input: LatentVideo,
    pub background: Option<LatentVideo>,
    pub mask: LatentVideo,
}

impl Conditioning {
    pub fn frames(&self) -> usize {
        self.input.shape().frames
    }

    /// Frames `[start, end)` of every group.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        Ok(Self {
            input: self.input.slice_frames(start, end)?,
            background: self.background.as_ref().map(|b| b.slice_frames(start, end)).transpose()?,
            mask: self.mask.slice_frames(start, end)?,
        })
    }
}

impl ConditioningLayout {
    pub fn new(groups: Vec<ChannelGroup>) -> Result<Self> {
        let count = |k| groups.iter().filter(|g| g.kind == k).count();
        if count(GroupKind::NoisyTarget) != 1 || groups.first().map(|g| g.kind) != Some(GroupKind::NoisyTarget) {
            return Err(Error::Layout("the noisy target must be the first and only such group".into()));
        }
        for k in [GroupKind::Input, GroupKind::Background, GroupKind::Mask] {
            if count(k) > 1 {
                return Err(Error::Layout(format!("group {k:?} appears more than once")));
            }
        }
        if groups.iter().any(|g| g.channels == 0) {
            return Err(Error::Layout("empty channel group".into()));
        }
        if let Some(m) = groups.iter().find(|g| g.kind == GroupKind::Mask) {
            if m.channels != 1 {
                return Err(Error::Layout("mask group has exactly one channel".into()));
            }
        }
        Ok(Self { groups })
    }

    /// `[noisy_target, flickering_input, mask]`.
    pub fn deflicker(latent_channels: usize) -> Self {
        Self::new(vec![
            ChannelGroup {
                kind: GroupKind::NoisyTarget,
                channels: latent_channels,
            },
            ChannelGroup {
                kind: GroupKind::Input,
                channels: latent_channels,
            },
            ChannelGroup {
                kind: GroupKind::Mask,
                channels: 1,
            },
        ])
        .expect("static layout is valid")
    }

    /// `[noisy_target, composite_input, background, mask]`.
    pub fn harmonizer(latent_channels: usize) -> Self {
        Self::new(vec![
            ChannelGroup {
                kind: GroupKind::NoisyTarget,
                channels: latent_channels,
            },
            ChannelGroup {
                kind: GroupKind::Input,
                channels: latent_channels,
            },
            ChannelGroup {
                kind: GroupKind::Background,
                channels: latent_channels,
            },
            ChannelGroup {
                kind: GroupKind::Mask,
                channels: 1,
            },
        ])
        .expect("static layout is valid")
    }

    pub fn groups(&self) -> &[ChannelGroup] {
        &self.groups
    }

    pub fn has(&self, kind: GroupKind) -> bool {
        self.groups.iter().any(|g| g.kind == kind)
    }

    pub fn latent_channels(&self) -> usize {
        self.groups[0].channels
    }

    pub fn total_channels(&self) -> usize {
        self.groups.iter().map(|g| g.channels).sum()
    }

    /// Checks that `z_t` and `cond` carry exactly the groups this layout expects.
    pub fn validate(&self, z_t: &LatentVideo, cond: &Conditioning) -> Result<()> {
        let shape = z_t.shape();
        if shape.channels != self.latent_channels() {
            return Err(Error::Layout(format!(
                "noisy latent has {} channels, layout expects {}",
                shape.channels,
                self.latent_channels()
            )));
        }
        let expect = |name: &str, got: LatentShape, channels: usize| -> Result<()> {
            got.ensure_same(&shape.with_channels(channels))
                .map_err(|e| Error::Layout(format!("{name}: {e}")))
        };
        for g in &self.groups[1..] {
            match g.kind {
                GroupKind::Input => expect("input", cond.input.shape(), g.channels)?,
                GroupKind::Background => match &cond.background {
                    Some(b) => expect("background", b.shape(), g.channels)?,
                    None => return Err(Error::Layout("layout expects a background group".into())),
                },
                GroupKind::Mask => expect("mask", cond.mask.shape(), 1)?,
                GroupKind::NoisyTarget => unreachable!("validated in constructor"),
            }
        }
        if cond.background.is_some() && !self.has(GroupKind::Background) {
            return Err(Error::Layout("background supplied but layout has no background group".into()));
        }
        Ok(())
    }

    /// Concatenates the groups token by token into a `[tokens, total_channels]` buffer.
    pub fn assemble(&self, z_t: &LatentVideo, cond: &Conditioning) -> Result<Vec<f64>> {
        self.validate(z_t, cond)?;
        let tokens = z_t.shape().tokens();
        let total = self.total_channels();
        let mut out = Vec::with_capacity(tokens * total);
        for tok in 0..tokens {
            for g in &self.groups {
                let src = match g.kind {
                    GroupKind::NoisyTarget => z_t.data(),
                    GroupKind::Input => cond.input.data(),
                    GroupKind::Background => cond.background.as_ref().expect("validated").data(),
                    GroupKind::Mask => cond.mask.data(),
                };
                out.extend_from_slice(&src[tok * g.channels..(tok + 1) * g.channels]);
            }
        }
        Ok(out)
    }
}
