//! Axis-aligned box geometry, generic over the float type.

use num_traits::Float;

use crate::error::{Error, Result};

/// Corner-form axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<T> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Float> BBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Self {
        let two = T::one() + T::one();
        Self::new(cx - w / two, cy - h / two, cx + w / two, cy + h / two)
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> T {
        self.width().max(T::zero()) * self.height().max(T::zero())
    }

    pub fn center(&self) -> (T, T) {
        let two = T::one() + T::one();
        (
            (self.x_min + self.x_max) / two,
            (self.y_min + self.y_max) / two,
        )
    }

    /// Clamps every corner into `[lo, hi_x] × [lo, hi_y]`.
    pub fn clip(&self, hi_x: T, hi_y: T) -> Self {
        let z = T::zero();
        Self::new(
            self.x_min.max(z).min(hi_x),
            self.y_min.max(z).min(hi_y),
            self.x_max.max(z).min(hi_x),
            self.y_max.max(z).min(hi_y),
        )
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > T::zero() && self.height() > T::zero())
    }

    pub fn cast<U: Float>(&self) -> BBox<U> {
        let c = |v: T| U::from(v).unwrap_or_else(U::nan);
        BBox::new(c(self.x_min), c(self.y_min), c(self.x_max), c(self.y_max))
    }

    pub fn intersection(&self, other: &Self) -> T {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        w.max(T::zero()) * h.max(T::zero())
    }
}

/// A box with a confidence score and class, in whatever pixel frame the
/// producer documents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox<T> {
    pub bbox: BBox<T>,
    pub confidence: T,
    pub class_id: usize,
}

/// Intersection over union; 0 when the union is empty.
pub fn iou<T: Float>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union > T::zero() {
        inter / union
    } else {
        T::zero()
    }
}

/// Complete-IoU: IoU minus the normalized squared center distance minus
/// the weighted aspect-ratio inconsistency. Lies in (−1.5, 1]; below −1
/// only for disjoint boxes of strongly opposed aspect.
pub fn ciou<T: Float>(a: &BBox<T>, b: &BBox<T>) -> Result<T> {
    if a.is_degenerate() || b.is_degenerate() {
        return Err(Error::InvalidArgument(
            "ciou: boxes must have positive area".into(),
        ));
    }
    let one = T::one();
    let four_over_pi2 = T::from(4.0 / (std::f64::consts::PI * std::f64::consts::PI)).unwrap();
    let i = iou(a, b);
    let (acx, acy) = a.center();
    let (bcx, bcy) = b.center();
    let rho2 = (acx - bcx).powi(2) + (acy - bcy).powi(2);
    let cw = a.x_max.max(b.x_max) - a.x_min.min(b.x_min);
    let ch = a.y_max.max(b.y_max) - a.y_min.min(b.y_min);
    let c2 = cw * cw + ch * ch;
    let v =
        four_over_pi2 * ((b.width() / b.height()).atan() - (a.width() / a.height()).atan()).powi(2);
    let alpha = if v > T::zero() {
        v / (v - i + one)
    } else {
        T::zero()
    };
    Ok(i - rho2 / c2 - alpha * v)
}

/// CIoU of a predicted center-form box against a fixed target, and its
/// gradient with respect to the prediction's `(cx, cy, w, h)`.
pub(crate) fn ciou_with_grad(pred: [f64; 4], target: &BBox<f64>) -> (f64, [f64; 4]) {
    let [pcx, pcy, pw, ph] = pred;
    let (px1, px2) = (pcx - pw / 2.0, pcx + pw / 2.0);
    let (py1, py2) = (pcy - ph / 2.0, pcy + ph / 2.0);
    let (tx1, ty1, tx2, ty2) = (target.x_min, target.y_min, target.x_max, target.y_max);
    let (tw, th) = (tx2 - tx1, ty2 - ty1);
    let (tcx, tcy) = target.center();

    // intersection
    let iw_raw = px2.min(tx2) - px1.max(tx1);
    let ih_raw = py2.min(ty2) - py1.max(ty1);
    let (iw, ih) = (iw_raw.max(0.0), ih_raw.max(0.0));
    let inter = iw * ih;
    let union = pw * ph + tw * th - inter;
    let iou = inter / union;

    // enclosing box
    let cw = px2.max(tx2) - px1.min(tx1);
    let ch = py2.max(ty2) - py1.min(ty1);
    let c2 = cw * cw + ch * ch;
    let rho2 = (pcx - tcx).powi(2) + (pcy - tcy).powi(2);

    let k = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);
    let dtheta = (tw / th).atan() - (pw / ph).atan();
    let v = k * dtheta * dtheta;
    let denom = v - iou + 1.0;
    let alpha = if v > 0.0 { v / denom } else { 0.0 };
    let value = iou - rho2 / c2 - alpha * v;

    // d value / d (iou, v, rho2, c2)
    let (d_iou, d_v) = if v > 0.0 {
        (
            1.0 - v * v / (denom * denom),
            -(v / denom + v * (1.0 - iou) / (denom * denom)),
        )
    } else {
        (1.0, 0.0)
    };
    let d_rho2 = -1.0 / c2;
    let d_c2 = rho2 / (c2 * c2);

    // iou = I / (Ap + At − I)
    let d_inter = d_iou * (union + inter) / (union * union);
    let d_ap = -d_iou * inter / (union * union);

    // corner gradients (x1, x2, y1, y2)
    let mut gx1 = 0.0;
    let mut gx2 = 0.0;
    let mut gy1 = 0.0;
    let mut gy2 = 0.0;
    if iw_raw > 0.0 && ih_raw > 0.0 {
        let d_iw = d_inter * ih;
        let d_ih = d_inter * iw;
        if px2 < tx2 {
            gx2 += d_iw;
        }
        if px1 > tx1 {
            gx1 -= d_iw;
        }
        if py2 < ty2 {
            gy2 += d_ih;
        }
        if py1 > ty1 {
            gy1 -= d_ih;
        }
    }
    let d_cw = d_c2 * 2.0 * cw;
    let d_ch = d_c2 * 2.0 * ch;
    if px2 >= tx2 {
        gx2 += d_cw;
    }
    if px1 <= tx1 {
        gx1 -= d_cw;
    }
    if py2 >= ty2 {
        gy2 += d_ch;
    }
    if py1 <= ty1 {
        gy1 -= d_ch;
    }

    // back to center form; area and aspect terms depend on w, h directly
    let r2 = pw * pw + ph * ph;
    let dv_dtheta_p = -2.0 * k * dtheta; // v = k (θt − θp)²
    let mut gcx = gx1 + gx2 + d_rho2 * 2.0 * (pcx - tcx);
    let mut gcy = gy1 + gy2 + d_rho2 * 2.0 * (pcy - tcy);
    let mut gw = (gx2 - gx1) / 2.0 + d_ap * ph + d_v * dv_dtheta_p * (ph / r2);
    let mut gh = (gy2 - gy1) / 2.0 + d_ap * pw + d_v * dv_dtheta_p * (-pw / r2);
    for g in [&mut gcx, &mut gcy, &mut gw, &mut gh] {
        if !g.is_finite() {
            *g = 0.0;
        }
    }
    (value, [gcx, gcy, gw, gh])
}
