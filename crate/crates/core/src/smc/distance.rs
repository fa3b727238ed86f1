use crate::converter::Waveform;
use crate::error::{Error, Result};

/// Scaled L2 discrepancy between a simulated and a measured waveform:
/// `||z - z*||_2 / (2K)`, where `z` stacks `V_out` then `I_out`.
///
/// Both waveforms must share the sample grid; nothing is resampled.
pub fn distance(z: &Waveform, z_star: &Waveform) -> Result<f64> {
    if z.is_empty() || z_star.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    z.check_same_grid(z_star)?;
    Ok(stacked_distance(
        &z.v_out,
        &z.i_out,
        &z_star.v_out,
        &z_star.i_out,
    ))
}

/// Channel-level form of [`distance`] without grid checks.
pub fn stacked_distance(v: &[f64], i: &[f64], v_star: &[f64], i_star: &[f64]) -> f64 {
    let k = v.len();
    let sq: f64 = v
        .iter()
        .zip(v_star)
        .chain(i.iter().zip(i_star))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    sq.sqrt() / (2.0 * k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wf(v: Vec<f64>, i: Vec<f64>) -> Waveform {
        let t = (0..v.len()).map(|k| k as f64).collect();
        Waveform::new(t, v, i).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let a = wf(vec![1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3]);
        assert_eq!(distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn unit_offsets_k2() {
        let a = wf(vec![0.0, 0.0], vec![0.0, 0.0]);
        let b = wf(vec![1.0, 1.0], vec![1.0, 1.0]);
        assert_eq!(distance(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn grid_mismatch_is_error() {
        let a = wf(vec![0.0; 3], vec![0.0; 3]);
        let b = wf(vec![0.0; 4], vec![0.0; 4]);
        assert!(matches!(distance(&a, &b), Err(Error::GridMismatch(_))));
    }
}
