//! Structured diagnostics on standard error, one logfmt line per event.

use std::fmt::Write as _;
use std::io::Write as _;

fn quote(v: &str) -> String {
    if !v.is_empty() && v.chars().all(|c| c.is_ascii_graphic() && c != '"' && c != '=') {
        v.to_string()
    } else {
        format!("{v:?}")
    }
}

pub fn line(level: &str, event: &str, fields: &[(&str, String)]) -> String {
    let mut s = format!("level={level} event={event}");
    for (k, v) in fields {
        let _ = write!(s, " {k}={}", quote(v));
    }
    s
}

pub fn emit(level: &str, event: &str, fields: &[(&str, String)]) {
    let _ = writeln!(std::io::stderr().lock(), "{}", line(level, event, fields));
}

pub fn info(event: &str, fields: &[(&str, String)]) {
    emit("info", event, fields);
}

pub fn warn(event: &str, fields: &[(&str, String)]) {
    emit("warn", event, fields);
}

pub fn error(event: &str, fields: &[(&str, String)]) {
    emit("error", event, fields);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotes_only_when_needed() {
        let l = line("info", "rate.done", &[("value", "0.5".into()), ("msg", "two words".into())]);
        assert_eq!(l, r#"level=info event=rate.done value=0.5 msg="two words""#);
    }
}
