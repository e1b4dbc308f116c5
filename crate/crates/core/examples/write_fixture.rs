//! Writes the synthetic election fixture: `write_fixture <dir> [users] [seed]`.

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "fixture".into());
    let users = args.next().map_or(500, |s| s.parse().expect("users is a count"));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed is an integer"));
    match mrp_core::fixtures::write_election_fixture(dir.as_ref(), users, seed) {
        Ok(f) => println!("{f:#?}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
