/// Times of upward crossings of `threshold`, ignoring crossings within
/// `debounce` of the previous counted one. The crossing time is linearly
/// interpolated between samples.
pub fn spike_times(times: &[f64], v: &[f64], threshold: f64, debounce: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for k in 1..v.len().min(times.len()) {
        if v[k - 1] < threshold && v[k] >= threshold {
            let frac = (threshold - v[k - 1]) / (v[k] - v[k - 1]);
            let t = times[k - 1] + frac * (times[k] - times[k - 1]);
            if out.last().is_none_or(|&last| t - last >= debounce) {
                out.push(t);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_upward_crossings_only() {
        let t: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let v = [0.0, 50.0, 60.0, 30.0, 45.0, 10.0, 0.0, 41.0];
        assert_eq!(spike_times(&t, &v, 40.0, 0.0), vec![0.8, 3.0 + 10.0 / 15.0, 6.0 + 40.0 / 41.0]);
    }

    #[test]
    fn debounce_drops_close_crossings() {
        let t: Vec<f64> = (0..6).map(|k| k as f64 * 0.5).collect();
        let v = [0.0, 50.0, 0.0, 50.0, 0.0, 50.0];
        let s = spike_times(&t, &v, 40.0, 1.5);
        assert_eq!(s.len(), 2);
        assert!((s[1] - s[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_trace_has_no_spikes() {
        assert!(spike_times(&[0.0, 1.0], &[40.0, 40.0], 40.0, 2.0).is_empty());
    }
}
