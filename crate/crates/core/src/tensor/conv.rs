//! Dilated "same" 2-D cross-correlation.
//!
//! Each sample is copied once into a zero-padded channels-last buffer whose
//! rows are `wp = w + pad_w` wide. In that layout every kernel tap is a fixed
//! flat offset, so one correlation sweeps output pixels `oh * wp + ow`
//! (columns `ow >= w` are computed and discarded). The input gradient is the
//! same sweep over the padded output gradient with flipped taps.
//!
//! Output channels are processed in lanes of [`LANES`] and input channels in
//! groups of [`GROUP`]; both are zero-padded. Every output element is summed
//! in a fixed order (taps, then channels), independent of the vector width.

#![allow(clippy::too_many_arguments)]

use crate::error::{Error, Result};

const LANES: usize = 8;
const GROUP: usize = 8;
/// Pixels per register block.
const PIX: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub n: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub dh: usize,
    pub dw: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    /// Input carried a leading batch axis.
    pub batched: bool,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], bias: &[usize], dilation: (usize, usize)) -> Result<Self> {
        let (n, c_in, h, w, batched) = match *input {
            [c, h, w] => (1, c, h, w, false),
            [n, c, h, w] => (n, c, h, w, true),
            _ => {
                return Err(Error::invalid(format!(
                    "conv2d input must be [C,H,W] or [N,C,H,W], got {input:?}"
                )))
            }
        };
        let [c_out, k_in, kh, kw] = *kernel else {
            return Err(Error::invalid(format!(
                "conv2d kernel must be [C_out,C_in,kH,kW], got {kernel:?}"
            )));
        };
        if input.iter().chain(kernel).any(|&e| e == 0) {
            return Err(Error::invalid("conv2d: zero-sized extent"));
        }
        if k_in != c_in {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                expected: vec![c_out, c_in, kh, kw],
                got: kernel.to_vec(),
            });
        }
        if bias != [c_out] {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                expected: vec![c_out],
                got: bias.to_vec(),
            });
        }
        let (dh, dw) = dilation;
        if dh == 0 || dw == 0 {
            return Err(Error::invalid("conv2d: dilation components must be >= 1"));
        }
        Ok(Self {
            n,
            c_in,
            c_out,
            h,
            w,
            kh,
            kw,
            dh,
            dw,
            pad_top: dh * (kh - 1) / 2,
            pad_left: dw * (kw - 1) / 2,
            batched,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        if self.batched {
            vec![self.n, self.c_out, self.h, self.w]
        } else {
            vec![self.c_out, self.h, self.w]
        }
    }

    fn pad_h(&self) -> usize {
        self.dh * (self.kh - 1)
    }

    fn pad_w(&self) -> usize {
        self.dw * (self.kw - 1)
    }

    fn layout(&self) -> Layout {
        let wp = self.w + self.pad_w();
        let hp = self.h + self.pad_h();
        Layout {
            wp,
            // Pixels swept per sample, plus slack so register blocks and the
            // widest tap never read past the buffer.
            sweep: self.h * wp,
            padded_pixels: hp * wp + self.pad_w() + PIX,
        }
    }

    fn taps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.kh).flat_map(move |i| (0..self.kw).map(move |j| (i, j)))
    }
}

struct Layout {
    wp: usize,
    sweep: usize,
    padded_pixels: usize,
}

fn round_up(x: usize, m: usize) -> usize {
    x.div_ceil(m) * m
}

/// Copies one NCHW sample into a zero-filled channels-last buffer at the
/// given row/column offset.
fn pack(src: &[f64], c: usize, h: usize, w: usize, cs: usize, wp: usize, (r0, c0): (usize, usize), dst: &mut [f64]) {
    dst.fill(0.0);
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                dst[((y + r0) * wp + x + c0) * cs + ci] = plane[y * w + x];
            }
        }
    }
}

/// `dst[p][o] = Σ_t Σ_c src[p + shift_t][c] · wts[t][c][o]` over `n_pix`
/// pixels. `src` rows have `cs` channels (a multiple of [`GROUP`]); `dst`
/// and weight rows have `cd` lanes (a multiple of [`LANES`]).
#[inline(always)]
fn correlate_impl<const FMA: bool>(src: &[f64], cs: usize, shifts: &[usize], wts: &[f64], cd: usize, n_pix: usize, dst: &mut [f64]) {
    debug_assert_eq!(wts.len(), shifts.len() * cs * cd);
    for p0 in (0..n_pix).step_by(PIX) {
        for cb in (0..cd).step_by(LANES) {
            let mut acc = [[0.0f64; LANES]; PIX];
            for (t, &shift) in shifts.iter().enumerate() {
                let wt = &wts[t * cs * cd..(t + 1) * cs * cd];
                let base = (p0 + shift) * cs;
                let rows = &src[base..base + PIX * cs];
                for ci in 0..cs {
                    let wrow: &[f64; LANES] = wt[ci * cd + cb..ci * cd + cb + LANES].try_into().unwrap();
                    for (j, a) in acc.iter_mut().enumerate() {
                        let b = rows[j * cs + ci];
                        for l in 0..LANES {
                            a[l] = if FMA { b.mul_add(wrow[l], a[l]) } else { a[l] + b * wrow[l] };
                        }
                    }
                }
            }
            for (j, a) in acc.iter().enumerate().take(n_pix - p0) {
                dst[(p0 + j) * cd + cb..(p0 + j) * cd + cb + LANES].copy_from_slice(a);
            }
        }
    }
}

/// `grad[t][c][o] += Σ_p src[p + shift_t][c] · up[p + up_offset][o]`.
#[inline(always)]
fn weight_grad_impl<const FMA: bool>(
    src: &[f64],
    cs: usize,
    shifts: &[usize],
    up: &[f64],
    up_offset: usize,
    cd: usize,
    n_pix: usize,
    grad: &mut [f64],
) {
    for (t, &shift) in shifts.iter().enumerate() {
        for c0 in (0..cs).step_by(GROUP) {
            for cb in (0..cd).step_by(LANES) {
                let mut acc = [[0.0f64; LANES]; GROUP];
                for p in 0..n_pix {
                    let xs = &src[(p + shift) * cs + c0..(p + shift) * cs + c0 + GROUP];
                    let u0 = (p + up_offset) * cd + cb;
                    let urow: &[f64; LANES] = up[u0..u0 + LANES].try_into().unwrap();
                    for (j, a) in acc.iter_mut().enumerate() {
                        let b = xs[j];
                        for l in 0..LANES {
                            a[l] = if FMA { b.mul_add(urow[l], a[l]) } else { a[l] + b * urow[l] };
                        }
                    }
                }
                for (j, a) in acc.iter().enumerate() {
                    let row = (t * cs + c0 + j) * cd + cb;
                    for (g, v) in grad[row..row + LANES].iter_mut().zip(a) {
                        *g += v;
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Isa {
    Portable,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

fn detect() -> Isa {
    #[cfg(target_arch = "x86_64")]
    {
        if is_x86_feature_detected!("avx512f") && is_x86_feature_detected!("fma") {
            return Isa::Avx512;
        }
        if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
            return Isa::Avx2;
        }
    }
    Isa::Portable
}

macro_rules! dispatch {
    ($name:ident, $imp:ident, ($($arg:ident : $ty:ty),*)) => {
        fn $name($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx512f,fma")]
                unsafe fn avx512($($arg: $ty),*) { $imp::<true>($($arg),*) }
                #[target_feature(enable = "avx2,fma")]
                unsafe fn avx2($($arg: $ty),*) { $imp::<true>($($arg),*) }
                match detect() {
                    // SAFETY: the required CPU features were detected at runtime.
                    Isa::Avx512 => return unsafe { avx512($($arg),*) },
                    Isa::Avx2 => return unsafe { avx2($($arg),*) },
                    Isa::Portable => {}
                }
            }
            $imp::<false>($($arg),*)
        }
    };
}

dispatch!(correlate, correlate_impl, (src: &[f64], cs: usize, shifts: &[usize], wts: &[f64], cd: usize, n_pix: usize, dst: &mut [f64]));
dispatch!(weight_grad, weight_grad_impl, (src: &[f64], cs: usize, shifts: &[usize], up: &[f64], up_offset: usize, cd: usize, n_pix: usize, grad: &mut [f64]));

/// Forward tap offsets and weights `[tap][c_in (cs)][c_out (cd)]`.
fn forward_weights(kernel: &[f64], g: &ConvGeometry, wp: usize, cs: usize, cd: usize) -> (Vec<usize>, Vec<f64>) {
    let mut shifts = Vec::with_capacity(g.kh * g.kw);
    let mut wts = vec![0.0; g.kh * g.kw * cs * cd];
    for (t, (i, j)) in g.taps().enumerate() {
        shifts.push(i * g.dh * wp + j * g.dw);
        for co in 0..g.c_out {
            for ci in 0..g.c_in {
                wts[(t * cs + ci) * cd + co] = kernel[((co * g.c_in + ci) * g.kh + i) * g.kw + j];
            }
        }
    }
    (shifts, wts)
}

pub(crate) fn forward(x: &[f64], kernel: &[f64], bias: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let lay = g.layout();
    let cs = round_up(g.c_in, GROUP);
    let cd = round_up(g.c_out, LANES);
    let (shifts, wts) = forward_weights(kernel, g, lay.wp, cs, cd);
    let plane = g.h * g.w;
    let mut xpad = vec![0.0; lay.padded_pixels * cs];
    let mut acc = vec![0.0; lay.sweep * cd];
    let mut out = vec![0.0; g.n * g.c_out * plane];
    for s in 0..g.n {
        let xs = &x[s * g.c_in * plane..(s + 1) * g.c_in * plane];
        pack(xs, g.c_in, g.h, g.w, cs, lay.wp, (g.pad_top, g.pad_left), &mut xpad);
        correlate(&xpad, cs, &shifts, &wts, cd, lay.sweep, &mut acc);
        let ys = &mut out[s * g.c_out * plane..(s + 1) * g.c_out * plane];
        for (co, b) in bias.iter().enumerate() {
            let y = &mut ys[co * plane..(co + 1) * plane];
            for oh in 0..g.h {
                for ow in 0..g.w {
                    y[oh * g.w + ow] = acc[(oh * lay.wp + ow) * cd + co] + b;
                }
            }
        }
    }
    out
}

/// Accumulates (`+=`) gradients into whichever of `dx`, `dk`, `db` is given.
pub(crate) fn backward(
    x: &[f64],
    kernel: &[f64],
    g: &ConvGeometry,
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    dk: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let lay = g.layout();
    let plane = g.h * g.w;
    let taps = g.kh * g.kw;
    let cs = round_up(g.c_in, GROUP);
    let cd = round_up(g.c_out, LANES);
    let pad_bottom = g.pad_h() - g.pad_top;
    let pad_right = g.pad_w() - g.pad_left;
    // The padded output gradient doubles as the unpadded one at this offset.
    let up_offset = pad_bottom * lay.wp + pad_right;

    // Flipped taps for the input gradient: weights [tap][c_out][c_in].
    let cin_lanes = round_up(g.c_in, LANES);
    let (back_shifts, back_wts) = if dx.is_some() {
        let mut shifts = Vec::with_capacity(taps);
        let mut wts = vec![0.0; taps * cd * cin_lanes];
        for (t, (i, j)) in g.taps().enumerate() {
            shifts.push((g.kh - 1 - i) * g.dh * lay.wp + (g.kw - 1 - j) * g.dw);
            for co in 0..g.c_out {
                for ci in 0..g.c_in {
                    wts[(t * cd + co) * cin_lanes + ci] = kernel[((co * g.c_in + ci) * g.kh + i) * g.kw + j];
                }
            }
        }
        (shifts, wts)
    } else {
        (Vec::new(), Vec::new())
    };
    let fwd_shifts: Vec<usize> = g.taps().map(|(i, j)| i * g.dh * lay.wp + j * g.dw).collect();

    let mut upad = vec![0.0; lay.padded_pixels * cd];
    let mut xpad = vec![0.0; lay.padded_pixels * cs];
    let mut dxacc = vec![0.0; lay.sweep * cin_lanes];
    let mut kgrad = vec![0.0; taps * cs * cd];
    for s in 0..g.n {
        let dy = &dout[s * g.c_out * plane..(s + 1) * g.c_out * plane];
        if let Some(db) = db.as_deref_mut() {
            for (co, acc) in db.iter_mut().enumerate() {
                *acc += dy[co * plane..(co + 1) * plane].iter().sum::<f64>();
            }
        }
        if dx.is_none() && dk.is_none() {
            continue;
        }
        pack(dy, g.c_out, g.h, g.w, cd, lay.wp, (pad_bottom, pad_right), &mut upad);
        if dk.is_some() {
            let xs = &x[s * g.c_in * plane..(s + 1) * g.c_in * plane];
            pack(xs, g.c_in, g.h, g.w, cs, lay.wp, (g.pad_top, g.pad_left), &mut xpad);
            weight_grad(&xpad, cs, &fwd_shifts, &upad, up_offset, cd, lay.sweep, &mut kgrad);
        }
        if let Some(dx) = dx.as_deref_mut() {
            correlate(&upad, cd, &back_shifts, &back_wts, cin_lanes, lay.sweep, &mut dxacc);
            let dxs = &mut dx[s * g.c_in * plane..(s + 1) * g.c_in * plane];
            for ci in 0..g.c_in {
                for oh in 0..g.h {
                    for ow in 0..g.w {
                        dxs[ci * plane + oh * g.w + ow] += dxacc[(oh * lay.wp + ow) * cin_lanes + ci];
                    }
                }
            }
        }
    }
    if let Some(dk) = dk {
        for (t, (i, j)) in g.taps().enumerate() {
            for co in 0..g.c_out {
                for ci in 0..g.c_in {
                    dk[((co * g.c_in + ci) * g.kh + i) * g.kw + j] += kgrad[(t * cs + ci) * cd + co];
                }
            }
        }
    }
}
