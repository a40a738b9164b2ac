//! Process memory probes from `/proc/self/status` (zero where unavailable).

fn status_kb(field: &str) -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with(field))?;
    line[field.len()..].trim().trim_end_matches("kB").trim().parse().ok()
}

/// Resident set size in MiB.
pub fn rss_mb() -> f64 {
    status_kb("VmRSS:").map_or(0.0, |kb| kb / 1024.0)
}

/// Peak resident set size in MiB.
pub fn peak_rss_mb() -> f64 {
    status_kb("VmHWM:").map_or(0.0, |kb| kb / 1024.0)
}

#[cfg(test)]
mod tests {
    #[test]
    fn probes_are_consistent() {
        let (now, peak) = (super::rss_mb(), super::peak_rss_mb());
        assert!(now >= 0.0 && peak >= 0.0);
        if cfg!(target_os = "linux") {
            assert!(now > 0.0 && peak >= now * 0.5);
        }
    }
}
