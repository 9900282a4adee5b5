use alloc::format;
use alloc::string::String;

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [
            0.0,
            -1.5,
            core::f64::consts::PI,
            1e-300,
            4.242_640_687_119_285e-1,
        ] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_f64(1.0), "1.0000000000000000e0");
    }
}
