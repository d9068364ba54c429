//! JSON with provenance, CSV tables and configuration files.

use relstar::analysis::ScanTable;
use relstar::report::{config_hash, parse_config, to_json_string, with_provenance, Provenance};

fn main() -> relstar::Result<()> {
    let config = parse_config("# blow-up\nN = 2\nm = 1\nfractions = 0.9,0.95\n")?;
    println!("config {config:?}, hash {}", config_hash(&config)?);

    let mut table = ScanTable::new("fraction", &["epsilon", "gap"]);
    table.push(0.9, vec![0.2384, 0.9689], None)?;
    table.push(0.95, vec![0.1544, f64::NAN], Some("energy solve did not converge".into()))?;
    let path = std::env::temp_dir().join("relstar_example.csv");
    table.write_csv(&path)?;
    println!("{}", std::fs::read_to_string(&path)?);

    let provenance = Provenance::new("example", &config)?;
    println!("{}", to_json_string(&with_provenance(&provenance, &table)?)?);
    Ok(())
}
