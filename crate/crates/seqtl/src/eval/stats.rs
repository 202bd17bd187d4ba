use crate::dataset::{ChannelKind, ChannelSchema, ChannelValue, EpisodeRecord};

/// The seven windows statistics are computed over, as fractions of the
/// truncated series: the full series, then the first and last 10%, 25%,
/// and 50%.
const WINDOW_FRACTIONS: [f64; 3] = [0.10, 0.25, 0.50];
pub const STATS_PER_CHANNEL: usize = 6 * 7;

/// Hand-crafted per-channel summary features from the raw (pre-encoding)
/// series, truncated to `horizon` hours.
///
/// Each raw channel contributes min, max, mean, population standard
/// deviation, skewness, and observed-value count over each of the seven
/// windows — 42 numbers per channel. Categorical observations enter as
/// their ordinal category index. Only observed values count: a window with
/// no observations contributes zeros, and skewness is zero for windows
/// with fewer than three values or zero variance.
pub fn statistical_features(
    record: &EpisodeRecord,
    schema: &ChannelSchema,
    horizon: usize,
) -> Vec<f64> {
    let steps = record.hours.len().min(horizon);
    let mut features = Vec::with_capacity(schema.raw_width() * STATS_PER_CHANNEL);

    for (c, def) in schema.channels.iter().enumerate() {
        // Observed values of this channel in hour order.
        let series: Vec<Option<f64>> = record.hours[..steps]
            .iter()
            .map(|row| match (&row[c], def.kind) {
                (Some(ChannelValue::Real(v)), ChannelKind::Real) => Some(*v),
                (Some(ChannelValue::Category(name)), ChannelKind::Categorical) => def
                    .categories
                    .iter()
                    .position(|k| k == name)
                    .map(|i| i as f64),
                _ => None,
            })
            .collect();

        for (start, end) in windows(steps) {
            let observed: Vec<f64> = series[start..end].iter().flatten().copied().collect();
            features.extend(window_stats(&observed));
        }
    }
    features
}

/// Window bounds over a series of `len` rows: full, first f, last f for
/// each fraction. Fractional lengths round up, so short series still get
/// non-empty windows.
fn windows(len: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(0, len)];
    for f in WINDOW_FRACTIONS {
        let w = ((f * len as f64).ceil() as usize).min(len);
        out.push((0, w));
    }
    for f in WINDOW_FRACTIONS {
        let w = ((f * len as f64).ceil() as usize).min(len);
        out.push((len - w, len));
    }
    out
}

fn window_stats(values: &[f64]) -> [f64; 6] {
    if values.is_empty() {
        return [0.0; 6];
    }
    let count = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / count;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    let std = m2.sqrt();
    let skew = if values.len() < 3 || m2 == 0.0 {
        0.0
    } else {
        let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / count;
        m3 / m2.powf(1.5)
    };
    [min, max, mean, std, skew, count]
}
