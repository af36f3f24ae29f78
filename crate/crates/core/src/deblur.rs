//! Video deblurring with circular 2-D blur kernels expressed as t-products.
//!
//! A frame stack of `p` images of size `m x n` is refolded into a tensor
//! `X~` of size `n x p x m` with `X~[c, j, r] = frame_j[r, c]`. A kernel
//! padded to `m x n` (center at the origin, circular wraparound) gives the
//! blur tensor `H` of size `n x n x m` whose `i`-th frontal slice is
//! `circ(h_i)`, `h_i` the `i`-th row of the padded kernel. Then
//! `H * X~` is the refolding of the per-frame circular convolution.

use std::path::Path;
use std::str::FromStr;

use image::codecs::pnm::{PnmSubtype, SampleEncoding};
use image::{GrayImage, ImageEncoder};
use rand::Rng;

use crate::error::{Error, Result};
use crate::sampling::BlockSet;
use crate::solvers::{
    factrbags, factrbgs, trbags, trbgs, FactorizedOperator, RunStatus, SolveOutput, SolverConfig,
};
use crate::tensor::{tprod, Matrix, Tensor3};

/// Odd-sized square convolution kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    weights: Matrix,
}

impl BlurKernel {
    pub fn new(weights: Matrix) -> Result<Self> {
        let k = weights.nrows();
        if k == 0 || k.is_multiple_of(2) || weights.ncols() != k {
            return Err(Error::InvalidKernel(format!(
                "kernel must be square with odd side, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidKernel("non-finite kernel weight".into()));
        }
        Ok(BlurKernel { weights })
    }

    /// Sampled 2-D Gaussian `exp(-(x^2 + y^2) / (2 sigma^2))`, normalized to
    /// sum 1.
    pub fn gaussian(k: usize, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidKernel(format!("sigma must be positive, got {sigma}")));
        }
        check_side(k)?;
        let c = (k / 2) as f64;
        let mut w = Matrix::from_fn(k, k, |i, j| {
            let (x, y) = (i as f64 - c, j as f64 - c);
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        });
        let total = w.sum();
        w /= total;
        BlurKernel::new(w)
    }

    /// Uniform `1 / k^2` weights.
    pub fn averaging(k: usize) -> Result<Self> {
        check_side(k)?;
        BlurKernel::new(Matrix::from_element(k, k, 1.0 / (k * k) as f64))
    }

    /// The `1 x 1` identity kernel.
    pub fn delta() -> Self {
        BlurKernel {
            weights: Matrix::from_element(1, 1, 1.0),
        }
    }

    pub fn side(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Zero-pads to `m x n` with the kernel center at `(0, 0)`.
    pub fn padded(&self, m: usize, n: usize) -> Result<Matrix> {
        let k = self.side();
        if k > m || k > n {
            return Err(Error::InvalidKernel(format!(
                "{k}x{k} kernel does not fit a {m}x{n} frame"
            )));
        }
        let c = k / 2;
        let mut out = Matrix::zeros(m, n);
        for a in 0..k {
            for b in 0..k {
                out[((a + m - c) % m, (b + n - c) % n)] += self.weights[(a, b)];
            }
        }
        Ok(out)
    }
}

fn check_side(k: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::InvalidKernel(format!("kernel side must be odd, got {k}")));
    }
    Ok(())
}

/// Parses `gaussian:K:SIGMA`, `gaussian:K` (sigma 1), `avg:K` or `delta`.
impl FromStr for BlurKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let side = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::InvalidKernel(format!("bad kernel size `{v}` in `{s}`")))
        };
        match parts.as_slice() {
            ["delta"] => Ok(BlurKernel::delta()),
            ["avg" | "averaging", k] => BlurKernel::averaging(side(k)?),
            ["gaussian", k] => BlurKernel::gaussian(side(k)?, 1.0),
            ["gaussian", k, sigma] => {
                let sigma = sigma
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidKernel(format!("bad sigma `{sigma}` in `{s}`")))?;
                BlurKernel::gaussian(side(k)?, sigma)
            }
            _ => Err(Error::InvalidKernel(format!("unrecognized kernel `{s}`"))),
        }
    }
}

/// Blur tensor `H` (`n x n x m`) for frames of size `m x n`.
pub fn build_blur_tensor(kernel: &BlurKernel, m: usize, n: usize) -> Result<Tensor3> {
    let pad = kernel.padded(m, n)?;
    Ok(Tensor3::from_fn(n, n, m, |a, b, i| pad[(i, (a + n - b) % n)]))
}

fn frame_dims(frames: &[Matrix]) -> Result<(usize, usize)> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidConfig("no frames".into()))?;
    let dims = (first.nrows(), first.ncols());
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::InvalidConfig("empty frame".into()));
    }
    if let Some(j) = frames.iter().position(|f| (f.nrows(), f.ncols()) != dims) {
        return Err(Error::InvalidConfig(format!(
            "frame {j} is {}x{}, expected {}x{}",
            frames[j].nrows(),
            frames[j].ncols(),
            dims.0,
            dims.1
        )));
    }
    Ok(dims)
}

/// Frames (`m x n` each) to the `n x p x m` tensor `X~[c, j, r] = frame_j[r, c]`.
pub fn refold_video(frames: &[Matrix]) -> Result<Tensor3> {
    let (m, n) = frame_dims(frames)?;
    let p = frames.len();
    let t = Tensor3::from_fn(n, p, m, |c, j, r| frames[j][(r, c)]);
    if !t.is_finite() {
        return Err(Error::NonFinite(0));
    }
    Ok(t)
}

/// Inverse of [`refold_video`].
pub fn unrefold(x: &Tensor3) -> Vec<Matrix> {
    let (n, p, m) = x.dims();
    (0..p)
        .map(|j| Matrix::from_fn(m, n, |r, c| x.get(c, j, r)))
        .collect()
}

/// Direct 2-D circular convolution of one frame with a center-anchored
/// kernel.
pub fn convolve_circular(frame: &Matrix, kernel: &BlurKernel) -> Matrix {
    let (m, n) = (frame.nrows(), frame.ncols());
    let w = kernel.weights();
    let k = kernel.side();
    let c = k / 2;
    Matrix::from_fn(m, n, |r, col| {
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                let rr = (r + m * k + c - a) % m;
                let cc = (col + n * k + c - b) % n;
                acc += w[(a, b)] * frame[(rr, cc)];
            }
        }
        acc
    })
}

/// Applies the kernels in order through the t-product.
pub fn blur_video(frames: &[Matrix], kernels: &[BlurKernel]) -> Result<Vec<Matrix>> {
    let (m, n) = frame_dims(frames)?;
    let mut x = refold_video(frames)?;
    for k in kernels {
        x = tprod(&build_blur_tensor(k, m, n)?, &x)?;
    }
    Ok(unrefold(&x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Trbgs,
    Trbags,
    FacTrbgs,
    FacTrbags,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Trbgs => "trbgs",
            SolverKind::Trbags => "trbags",
            SolverKind::FacTrbgs => "factrbgs",
            SolverKind::FacTrbags => "factrbags",
        }
    }

    pub fn is_factorized(self) -> bool {
        matches!(self, SolverKind::FacTrbgs | SolverKind::FacTrbags)
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trbgs" => Ok(SolverKind::Trbgs),
            "trbags" => Ok(SolverKind::Trbags),
            "factrbgs" => Ok(SolverKind::FacTrbgs),
            "factrbags" => Ok(SolverKind::FacTrbags),
            other => Err(Error::InvalidConfig(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DeblurOutput {
    /// Recovered frames clipped to `[0, 1]`.
    pub frames: Vec<Matrix>,
    pub solve: SolveOutput,
}

impl DeblurOutput {
    pub fn diverged(&self) -> bool {
        matches!(self.solve.status, RunStatus::Diverged { .. })
    }
}

/// Recovers frames blurred by `kernels` (applied in order).
///
/// The first kernel becomes the inner factor `V` and the remaining kernels,
/// composed, the outer factor `U` (the identity when there is only one).
/// Plain solvers work on `H = U * V`. `reference`, when given, is used as
/// the oracle for relative errors. Blocks are contiguous column partitions
/// of size `block`.
pub fn deblur(
    blurred: &[Matrix],
    kernels: &[BlurKernel],
    solver: SolverKind,
    cfg: &SolverConfig,
    block: usize,
    reference: Option<&[Matrix]>,
) -> Result<DeblurOutput> {
    let (m, n) = frame_dims(blurred)?;
    let (first, rest) = kernels
        .split_first()
        .ok_or_else(|| Error::InvalidConfig("at least one kernel is required".into()))?;
    let v = build_blur_tensor(first, m, n)?;
    let mut u = Tensor3::identity(n, m);
    for k in rest {
        u = tprod(&build_blur_tensor(k, m, n)?, &u)?;
    }
    let y = refold_video(blurred)?;
    let x_ref = reference.map(refold_video).transpose()?;
    if let Some(x) = &x_ref {
        if x.dims() != y.dims() {
            return Err(Error::InvalidConfig("reference video does not match the blurred one".into()));
        }
    }
    let blocks = BlockSet::partition(n, block)?;
    let solve = match solver {
        SolverKind::Trbgs | SolverKind::Trbags => {
            let h = tprod(&u, &v)?;
            if solver == SolverKind::Trbgs {
                trbgs(&h, &y, &blocks, cfg, x_ref.as_ref())?
            } else {
                trbags(&h, &y, &blocks, cfg, x_ref.as_ref())?
            }
        }
        SolverKind::FacTrbgs | SolverKind::FacTrbags => {
            let op = FactorizedOperator::new(u, v)?;
            let oracle = match &x_ref {
                Some(x) => Some(crate::solvers::FactorizedOracle {
                    z_star: tprod(op.v(), x)?,
                    x_star: x.clone(),
                }),
                None => None,
            };
            if solver == SolverKind::FacTrbgs {
                factrbgs(&op, &y, &blocks, &blocks, cfg, oracle.as_ref())?
            } else {
                factrbags(&op, &y, &blocks, &blocks, cfg, oracle.as_ref())?
            }
        }
    };
    let frames = unrefold(&solve.x)
        .into_iter()
        .map(|f| f.map(|v| v.clamp(0.0, 1.0)))
        .collect();
    Ok(DeblurOutput { frames, solve })
}

/// Random smooth frames in `[0, 1]`: uniform noise blurred by a wide
/// Gaussian and rescaled to the unit interval.
pub fn synthetic_video<R: Rng + ?Sized>(m: usize, n: usize, p: usize, rng: &mut R) -> Result<Vec<Matrix>> {
    let side = {
        let s = 7.min(m).min(n);
        if s % 2 == 0 { s - 1 } else { s }
    };
    let smooth = BlurKernel::gaussian(side, 2.0)?;
    let frames = (0..p)
        .map(|_| {
            let noise = Matrix::from_fn(m, n, |_, _| rng.random::<f64>());
            let f = convolve_circular(&noise, &smooth);
            let (lo, hi) = (f.min(), f.max());
            if hi > lo {
                f.map(|v| (v - lo) / (hi - lo))
            } else {
                f.map(|_| 0.5)
            }
        })
        .collect();
    Ok(frames)
}

/// Frobenius distance between two videos.
pub fn video_distance(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Reads an 8-bit grayscale PGM as values in `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(Matrix::from_fn(h as usize, w as usize, |r, c| {
        f64::from(img.get_pixel(c as u32, r as u32)[0]) / 255.0
    }))
}

/// Writes a frame as binary PGM, clipping to `[0, 1]` and mapping
/// linearly to `0..=255`.
pub fn write_pgm(path: impl AsRef<Path>, frame: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = (frame.nrows(), frame.ncols());
    let img = GrayImage::from_fn(w as u32, h as u32, |c, r| {
        let v = frame[(r as usize, c as usize)].clamp(0.0, 1.0);
        image::Luma([(v * 255.0).round() as u8])
    });
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = image::codecs::pnm::PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder
        .write_image(img.as_raw(), w as u32, h as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
