use std::path::Path;
use std::process::Command;

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/uniweb.h"))
            .unwrap();
    for name in [
        "uw_last_error_message",
        "uw_string_free",
        "uw_growth_rate",
        "uw_wif",
        "uw_internal_general_ratio",
        "uw_spearman",
        "uw_pca",
        "uw_registry_load",
        "uw_registry_summary",
        "uw_registry_hash",
        "uw_registry_free",
        "uw_report_run",
        "typedef struct UwRegistry UwRegistry;",
        "UW_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"uniweb.h\"\nint main(void) { double g; return uw_growth_rate(1.0, 2.0, 1, &g) == UW_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler found; header compile check not run");
            return;
        }
    };
    assert!(status.success());
}
