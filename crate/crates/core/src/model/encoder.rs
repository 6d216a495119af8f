//! Patch-embedding transformer encoder (pre-norm blocks).

use super::{Bound, ModelConfig, ModelError};
use crate::autodiff::{Tape, Tensor, Var};

/// Rearranges a batch of `C×H×W` images into `[B, S, C·P·P]` patch rows.
///
/// Patches are numbered row-major over the patch grid; inside a patch the
/// order is channel, then pixel row, then pixel column.
pub fn patchify(images: &[&Tensor], cfg: &ModelConfig) -> Result<Tensor, ModelError> {
    let [c, h, w] = cfg.image_shape();
    let p = cfg.patch;
    let (gh, gw) = cfg.grid();
    let pp = cfg.patch_pixels();
    let mut data = Vec::with_capacity(images.len() * cfg.seq_len() * pp);
    for image in images {
        if image.shape() != [c, h, w] {
            return Err(ModelError::ImageShape { expected: vec![c, h, w], found: image.shape().to_vec() });
        }
        let px = image.data();
        for gy in 0..gh {
            for gx in 0..gw {
                for ch in 0..c {
                    for dy in 0..p {
                        let row = ch * h * w + (gy * p + dy) * w + gx * p;
                        data.extend_from_slice(&px[row..row + p]);
                    }
                }
            }
        }
    }
    if images.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    Ok(Tensor::new(vec![images.len(), cfg.seq_len(), pp], data)?)
}

fn affine_norm<'t>(x: Var<'t>, gain: Var<'t>, bias: Var<'t>) -> Result<Var<'t>, ModelError> {
    Ok(x.layer_norm().mul_broadcast(&gain)?.add_broadcast(&bias)?)
}

fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>, ModelError> {
    Ok(x.matmul(&w)?.add_broadcast(&b)?)
}

/// Multi-head self-attention over `[B, S, d]`.
fn self_attention<'t>(p: &Bound<'t>, prefix: &str, x: Var<'t>, heads: usize) -> Result<Var<'t>, ModelError> {
    let shape = x.shape();
    let (b, s, d) = (shape[0], shape[1], shape[2]);
    let dh = d / heads;
    let split = |name: &str| -> Result<Var<'t>, ModelError> {
        let w = p.get(&format!("{prefix}.w{name}"))?;
        let proj = match name {
            "k" => x.matmul(&w)?,
            _ => linear(x, w, p.get(&format!("{prefix}.b{name}"))?)?,
        };
        Ok(proj.reshape(&[b, s, heads, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[b * heads, s, dh])?)
    };
    let (q, k, v) = (split("q")?, split("k")?, split("v")?);
    let attn = q.bmm(&k, true)?.scale(1.0 / (dh as f64).sqrt()).softmax()?;
    let mixed = attn.bmm(&v, false)?.reshape(&[b, heads, s, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[b, s, d])?;
    linear(mixed, p.get(&format!("{prefix}.wo"))?, p.get(&format!("{prefix}.bo"))?)
}

/// Encodes a `[B, S, C·P·P]` patch tensor into a `[B, S, d]` feature map.
pub fn encode_patches<'t>(p: &Bound<'t>, cfg: &ModelConfig, patches: Var<'t>) -> Result<Var<'t>, ModelError> {
    let mut x = linear(patches, p.get("encoder.patch.w")?, p.get("encoder.patch.b")?)?.add_broadcast(&p.get("encoder.pos")?)?;
    for blk in 0..cfg.depth {
        let pre = format!("encoder.block{blk}");
        let h = affine_norm(x, p.get(&format!("{pre}.ln1.g"))?, p.get(&format!("{pre}.ln1.b"))?)?;
        x = x.add(&self_attention(p, &format!("{pre}.attn"), h, cfg.heads)?)?;
        let h = affine_norm(x, p.get(&format!("{pre}.ln2.g"))?, p.get(&format!("{pre}.ln2.b"))?)?;
        let h = linear(h, p.get(&format!("{pre}.mlp.w1"))?, p.get(&format!("{pre}.mlp.b1"))?)?.gelu();
        let h = linear(h, p.get(&format!("{pre}.mlp.w2"))?, p.get(&format!("{pre}.mlp.b2"))?)?;
        x = x.add(&h)?;
    }
    affine_norm(x, p.get("encoder.ln_f.g")?, p.get("encoder.ln_f.b")?)
}

/// Visual encoder `V(x)`: images → `[B, S, d]` feature map.
pub fn encode_image<'t>(p: &Bound<'t>, cfg: &ModelConfig, tape: &'t Tape, images: &[&Tensor]) -> Result<Var<'t>, ModelError> {
    let patches = tape.constant(patchify(images, cfg)?);
    encode_patches(p, cfg, patches)
}
