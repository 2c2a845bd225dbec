//! Central finite-difference check of tape gradients.

use super::{forward, AdError, Bindings, ParamSet, Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub enum Coordinate {
    Param { name: String, index: usize },
    Omega(usize),
}

#[derive(Clone, Debug)]
pub struct CoordinateCheck {
    pub coordinate: Coordinate,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// The perturbation crossed a relu or max/min switch, so only a
    /// subgradient exists here; excluded from pass/fail.
    pub subgradient_point: bool,
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    pub coordinates: Vec<CoordinateCheck>,
    /// Max relative error over smooth coordinates.
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

impl GradientReport {
    pub fn flagged(&self) -> impl Iterator<Item = &CoordinateCheck> {
        self.coordinates.iter().filter(|c| c.subgradient_point)
    }
}

/// `|a - n| / max(1, |a|, |n|)`: relative for large gradients, absolute near zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn eval<F>(build: &F, params: &ParamSet, omega: &[f64]) -> Result<(f64, Vec<usize>), AdError>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var, AdError>,
{
    let (v, tape) = forward(params, omega, build)?;
    Ok((v, tape.kink_signature()))
}

/// Compares reverse-mode gradients against central differences with the
/// given `step` over every parameter and prediction coordinate.
pub fn check_gradient<F>(
    build: F,
    params: &ParamSet,
    omega: &[f64],
    step: f64,
    tol: f64,
) -> Result<GradientReport, AdError>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var, AdError>,
{
    if !(step > 0.0) {
        return Err(AdError::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let (_, mut tape) = forward(params, omega, &build)?;
    let base_sig = tape.kink_signature();
    let grads = tape.backward()?;

    let mut coordinates = Vec::new();
    let mut probe = |coordinate: Coordinate,
                     analytic: f64,
                     plus: (f64, Vec<usize>),
                     minus: (f64, Vec<usize>)| {
        let numeric = (plus.0 - minus.0) / (2.0 * step);
        let kink = plus.1 != base_sig || minus.1 != base_sig;
        coordinates.push(CoordinateCheck {
            coordinate,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
            subgradient_point: kink,
        });
    };

    let mut work = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let g = grads.param(name).expect("every bound param has a gradient").clone();
        for index in 0..g.len() {
            let orig = work.get(name).expect("present").data()[index];
            work.data_mut(name).expect("present")[index] = orig + step;
            let plus = eval(&build, &work, omega)?;
            work.data_mut(name).expect("present")[index] = orig - step;
            let minus = eval(&build, &work, omega)?;
            work.data_mut(name).expect("present")[index] = orig;
            probe(Coordinate::Param { name: name.clone(), index }, g.data()[index], plus, minus);
        }
    }

    let gomega = grads.omega.clone().unwrap_or_default();
    let mut w = omega.to_vec();
    for (index, &analytic) in gomega.iter().enumerate() {
        let orig = w[index];
        w[index] = orig + step;
        let plus = eval(&build, params, &w)?;
        w[index] = orig - step;
        let minus = eval(&build, params, &w)?;
        w[index] = orig;
        probe(Coordinate::Omega(index), analytic, plus, minus);
    }

    let max_rel_error = coordinates
        .iter()
        .filter(|c| !c.subgradient_point)
        .map(|c| c.rel_error)
        .fold(0.0, f64::max);
    Ok(GradientReport { coordinates, max_rel_error, tol, passed: max_rel_error <= tol })
}
