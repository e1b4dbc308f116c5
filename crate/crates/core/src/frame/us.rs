//! The 50 US states plus the District of Columbia and their land borders.

/// State names in alphabetical order; the position is the 0-based area id.
pub const STATE_NAMES: [&str; 51] = [
    "Alabama",
    "Alaska",
    "Arizona",
    "Arkansas",
    "California",
    "Colorado",
    "Connecticut",
    "Delaware",
    "District of Columbia",
    "Florida",
    "Georgia",
    "Hawaii",
    "Idaho",
    "Illinois",
    "Indiana",
    "Iowa",
    "Kansas",
    "Kentucky",
    "Louisiana",
    "Maine",
    "Maryland",
    "Massachusetts",
    "Michigan",
    "Minnesota",
    "Mississippi",
    "Missouri",
    "Montana",
    "Nebraska",
    "Nevada",
    "New Hampshire",
    "New Jersey",
    "New Mexico",
    "New York",
    "North Carolina",
    "North Dakota",
    "Ohio",
    "Oklahoma",
    "Oregon",
    "Pennsylvania",
    "Rhode Island",
    "South Carolina",
    "South Dakota",
    "Tennessee",
    "Texas",
    "Utah",
    "Vermont",
    "Virginia",
    "Washington",
    "West Virginia",
    "Wisconsin",
    "Wyoming",
];

/// Postal codes, aligned with [`STATE_NAMES`].
pub const STATE_CODES: [&str; 51] = [
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "DC", "FL", "GA", "HI", "ID", "IL", "IN", "IA", "KS", "KY", "LA",
    "ME", "MD", "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH", "NJ", "NM", "NY", "NC", "ND", "OH", "OK", "OR",
    "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV", "WI", "WY",
];

// Shared land borders. Four Corners point contacts are not borders.
// Alaska and Hawaii are islands.
const BORDERS: &[(&str, &[&str])] = &[
    ("AL", &["FL", "GA", "MS", "TN"]),
    ("AZ", &["CA", "NM", "NV", "UT"]),
    ("AR", &["LA", "MS", "MO", "OK", "TN", "TX"]),
    ("CA", &["AZ", "NV", "OR"]),
    ("CO", &["KS", "NE", "NM", "OK", "UT", "WY"]),
    ("CT", &["MA", "NY", "RI"]),
    ("DE", &["MD", "NJ", "PA"]),
    ("DC", &["MD", "VA"]),
    ("FL", &["AL", "GA"]),
    ("GA", &["AL", "FL", "NC", "SC", "TN"]),
    ("ID", &["MT", "NV", "OR", "UT", "WA", "WY"]),
    ("IL", &["IN", "IA", "KY", "MO", "WI"]),
    ("IN", &["IL", "KY", "MI", "OH"]),
    ("IA", &["IL", "MN", "MO", "NE", "SD", "WI"]),
    ("KS", &["CO", "MO", "NE", "OK"]),
    ("KY", &["IL", "IN", "MO", "OH", "TN", "VA", "WV"]),
    ("LA", &["AR", "MS", "TX"]),
    ("ME", &["NH"]),
    ("MD", &["DE", "PA", "VA", "WV", "DC"]),
    ("MA", &["CT", "NH", "NY", "RI", "VT"]),
    ("MI", &["IN", "OH", "WI"]),
    ("MN", &["IA", "ND", "SD", "WI"]),
    ("MS", &["AL", "AR", "LA", "TN"]),
    ("MO", &["AR", "IL", "IA", "KS", "KY", "NE", "OK", "TN"]),
    ("MT", &["ID", "ND", "SD", "WY"]),
    ("NE", &["CO", "IA", "KS", "MO", "SD", "WY"]),
    ("NV", &["AZ", "CA", "ID", "OR", "UT"]),
    ("NH", &["ME", "MA", "VT"]),
    ("NJ", &["DE", "NY", "PA"]),
    ("NM", &["AZ", "CO", "OK", "TX"]),
    ("NY", &["CT", "MA", "NJ", "PA", "VT"]),
    ("NC", &["GA", "SC", "TN", "VA"]),
    ("ND", &["MN", "MT", "SD"]),
    ("OH", &["IN", "KY", "MI", "PA", "WV"]),
    ("OK", &["AR", "CO", "KS", "MO", "NM", "TX"]),
    ("OR", &["CA", "ID", "NV", "WA"]),
    ("PA", &["DE", "MD", "NJ", "NY", "OH", "WV"]),
    ("RI", &["CT", "MA"]),
    ("SC", &["GA", "NC"]),
    ("SD", &["IA", "MN", "MT", "NE", "ND", "WY"]),
    ("TN", &["AL", "AR", "GA", "KY", "MS", "MO", "NC", "VA"]),
    ("TX", &["AR", "LA", "NM", "OK"]),
    ("UT", &["AZ", "CO", "ID", "NV", "WY"]),
    ("VT", &["MA", "NH", "NY"]),
    ("VA", &["KY", "MD", "NC", "TN", "WV", "DC"]),
    ("WA", &["ID", "OR"]),
    ("WV", &["KY", "MD", "OH", "PA", "VA"]),
    ("WI", &["IL", "IA", "MI", "MN"]),
    ("WY", &["CO", "ID", "MT", "NE", "SD", "UT"]),
];

fn code_index(code: &str) -> usize {
    STATE_CODES.iter().position(|&c| c == code).unwrap_or_else(|| panic!("unknown state code {code}"))
}

/// Undirected 1-based edge list over the 51 areas, `node1 < node2`, sorted.
pub fn state_edges() -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = BORDERS
        .iter()
        .flat_map(|(a, bs)| {
            let ia = code_index(a);
            bs.iter().map(move |b| {
                let ib = code_index(b);
                (ia.min(ib) + 1, ia.max(ib) + 1)
            })
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}
