//! `--config FILE` expansion: each `key=value` line becomes `--key value`,
//! inserted before the command-line flags so that flags win.

use std::path::Path;

use crate::error::CliError;

fn parse_line(
    line: &str,
    number: usize,
    path: &Path,
) -> Result<Option<(String, String)>, CliError> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let (key, value) = line.split_once('=').ok_or_else(|| {
        CliError::Config(format!("{}:{number}: expected key=value", path.display()))
    })?;
    let key = key.trim().replace('_', "-");
    if key.is_empty() || key == "config" {
        return Err(CliError::Config(format!(
            "{}:{number}: invalid key '{key}'",
            path.display()
        )));
    }
    Ok(Some((key, value.trim().to_string())))
}

/// Boolean keys: `true` adds the bare flag, `false` omits it.
const SWITCHES: [&str; 1] = ["fem"];

fn read_config(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let mut args = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some((key, value)) = parse_line(line, i + 1, path)? {
            if SWITCHES.contains(&key.as_str()) {
                match value.as_str() {
                    "true" | "1" | "yes" => args.push(format!("--{key}")),
                    "false" | "0" | "no" => {}
                    other => {
                        return Err(CliError::Config(format!(
                            "{}:{}: '{key}' expects true or false, got '{other}'",
                            path.display(),
                            i + 1
                        )))
                    }
                }
            } else {
                args.push(format!("--{key}"));
                args.push(value);
            }
        }
    }
    Ok(args)
}

/// Removes `--config FILE` / `--config=FILE` from `argv` and splices the
/// file's options in directly after the subcommand.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            let path = it
                .next()
                .ok_or_else(|| CliError::Config("--config needs a file".into()))?;
            config = Some(path);
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let from_file = read_config(Path::new(&path))?;
    // argv[0] is the program, argv[1] the subcommand.
    let split = rest.len().min(2);
    let mut out: Vec<String> = rest[..split].to_vec();
    out.extend(from_file);
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn no_config_is_identity() {
        let argv = strings(&["spdekit", "assemble", "--alpha", "2"]);
        assert_eq!(expand(argv.clone()).unwrap(), argv);
    }

    #[test]
    fn file_options_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# model\nalpha = 2\nnoise_precision=4\nfem=true\n\n").unwrap();
        let argv = strings(&[
            "spdekit",
            "krige",
            "--config",
            path.to_str().unwrap(),
            "--alpha",
            "1",
        ]);
        assert_eq!(
            expand(argv).unwrap(),
            strings(&[
                "spdekit",
                "krige",
                "--alpha",
                "2",
                "--noise-precision",
                "4",
                "--fem",
                "--alpha",
                "1"
            ])
        );
    }

    #[test]
    fn malformed_config_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "alpha 2\n").unwrap();
        let argv = strings(&[
            "spdekit",
            "assemble",
            &format!("--config={}", path.display()),
        ]);
        assert!(matches!(expand(argv), Err(CliError::Config(_))));
        let missing = strings(&["spdekit", "assemble", "--config", "/nonexistent/x.cfg"]);
        assert!(matches!(expand(missing), Err(CliError::Io(_))));
    }
}
