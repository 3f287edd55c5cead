//! On-disk formats: Pajek networks, CSV tables and the project file.

mod pajek;
mod project;
pub mod tables;

pub use pajek::{write_pajek, write_pajek_arcs};
pub use project::{
    export_fingerprint, load_project, load_project_file, save_project, save_project_file, state_fingerprint,
    LockError, ProjectFile, ProjectLock, Settings, FORMAT_VERSION,
};

/// Six significant digits, `.` separator, no trailing zeros; exponent form
/// outside `1e-5 ..< 1e6`.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_float;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_float(1.0), "1");
        assert_eq!(fmt_float(0.578), "0.578");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_float(-2.5), "-2.5");
        assert_eq!(fmt_float(123456.7), "123457");
        assert_eq!(fmt_float(999999.7), "1e6");
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(1.5e-7), "1.5e-7");
    }
}
