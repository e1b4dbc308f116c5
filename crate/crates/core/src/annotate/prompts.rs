//! Prompt templates and the category blocks.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{AnnotateError, UserRecord};

/// One category block: header, identifier letter and the verbatim text that
/// goes into the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CategoryBlock {
    pub key: &'static str,
    pub header: &'static str,
    pub letter: char,
    /// Identifiers in prompt order.
    pub ids: &'static [&'static str],
    pub text: &'static str,
}

/// Blocks in canonical order. The registration block has no `R1`.
pub const BLOCKS: [CategoryBlock; 10] = [
    CategoryBlock {
        key: "ethnicity",
        header: "ETHNICITY",
        letter: 'E',
        ids: &["E1", "E2", "E3", "E4", "E5"],
        text: "ETHNICITY:\nE1) White \nE2) Black\nE3) Hispanic\nE4) Asian\nE5) Other\n",
    },
    CategoryBlock {
        key: "age",
        header: "AGE",
        letter: 'A',
        ids: &["A1", "A2", "A3", "A4", "A5", "A6", "A7"],
        text: "AGE:\nA1) between 0 and 17 year old\nA2) 18 to 24 years old\nA3) 25 to 34 years old\nA4) 35 to 44 years old\nA5) 45 to 54 years old\nA6) 55 to 64 years old\nA7) 65 or older\n",
    },
    CategoryBlock {
        key: "sex",
        header: "SEX",
        letter: 'S',
        ids: &["S1", "S2"],
        text: "SEX:\nS1) Male\nS2) Female\n",
    },
    CategoryBlock {
        key: "marital",
        header: "MARITAL STATUS",
        letter: 'M',
        ids: &["M1", "M2"],
        text: "MARITAL STATUS:\nM1) Married\nM2) Not married\n",
    },
    CategoryBlock {
        key: "education",
        header: "HIGHEST EDUCATIONAL QUALIFICATION",
        letter: 'Q',
        ids: &["Q1", "Q2", "Q3"],
        text: "HIGHEST EDUCATIONAL QUALIFICATION:\nQ1) no formal education\nQ2) completed high-school but did not go to college\nQ3) obtained a Bachelor degree or higher\n",
    },
    CategoryBlock {
        key: "income",
        header: "HOUSEHOLD INCOME BRACKET",
        letter: 'H',
        ids: &["H1", "H2", "H3", "H4", "H5"],
        text: "HOUSEHOLD INCOME BRACKET:\nH1) up to 25000 USD per year\nH2) between 25000 and 50000 USD per year\nH3) between 50000 and 75000 USD per year\nH4) between 75000 and 100000 USD per year\nH5) more than 100000 USD per year\n",
    },
    CategoryBlock {
        key: "registration",
        header: "THIS INDIVIDUAL IS REGISTERED AS",
        letter: 'R',
        ids: &["R2", "R3", "R4"],
        text: "THIS INDIVIDUAL IS REGISTERED AS:\nR2) a Democrat\nR3) a Republican\nR4) an Independent\n",
    },
    CategoryBlock {
        key: "vote2016",
        header: "2016 US PRESIDENTIAL ELECTION VOTE",
        letter: 'L',
        ids: &["L1", "L2", "L3", "L4", "L5"],
        text: "2016 US PRESIDENTIAL ELECTION VOTE:\nL1) did not vote\nL2) voted for Donald Trump, the Republican candidate\nL3) voted for Hillary Clinton, the Democrat candidate\nL4) voted for Gary Johnson, the Libertarian candidate\nL5) voted for Jill Stein, the Green Party candidate\n",
    },
    CategoryBlock {
        key: "vote2018",
        header: "2018 MIDTERM ELECTION VOTE",
        letter: 'T',
        ids: &["T1", "T2", "T3", "T4"],
        text: "2018 MIDTERM ELECTION VOTE:\nT1) did not vote\nT2) voted for the Republican Party\nT3) voted for the Democratic Party\nT4) voted for a third party\n",
    },
    CategoryBlock {
        key: "vote2020",
        header: "2020 US PRESIDENTIAL ELECTION VOTE",
        letter: 'V',
        ids: &["V1", "V2", "V3", "V4", "V5"],
        text: "2020 US PRESIDENTIAL ELECTION VOTE:\nV1) did not vote\nV2) voted for Donald Trump, the Republican candidate\nV3) voted for Joe Biden, the Democrat candidate\nV4) voted for Jo Jorgensen, the Libertarian candidate\nV5) voted for Howie Hawkins, the Green Party candidate\n",
    },
];

pub fn block_index(key: &str) -> Option<usize> {
    BLOCKS.iter().position(|b| b.key == key)
}

/// Block holding identifier `id`, if the identifier exists.
pub fn block_of_identifier(id: &str) -> Option<usize> {
    BLOCKS.iter().position(|b| b.ids.contains(&id))
}

// Arguments are joined with single spaces, the way the original template
// concatenated them.
const LOCATION_HEAD: &str = "A person writes their location in their bio as follows:\u{226a}";
const LOCATION_TAIL: &str = "\u{226b}.\nWhich state in the US do they live in ?\nFor this answer consider Washington DC and other Territories of the US as states.\nWrite out just the full name of the state, and if not from US, write \"Not from US\"";

const DEMO_HEAD: &str = "A person has in their Twitter bio the following information:\n\u{226a}";
const DEMO_MID: &str = "\u{226b} ;\nFurther, they have written the following tweets:\n\u{226a}";
const DEMO_TAIL: &str = "\u{226b}.\nI will now show you a number of categories to which this user may belong.\nThe categories are preceded by a header (e.g. \"AGE:\" or \"SEX:\" etc.) and an identifier (e.g. \"A1\", \"A2\" or \"E2\" etc.). Please select, for each header, the most likely category to which this user belongs to.\nIn your answer present, for each header, the selected identifier.";

pub fn build_location_prompt(user: &UserRecord) -> String {
    [LOCATION_HEAD, &user.location, LOCATION_TAIL].join(" ")
}

/// Block order for one prompt: a uniform permutation.
pub fn block_order<R: Rng + ?Sized>(rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..BLOCKS.len()).collect();
    order.shuffle(rng);
    order
}

/// The demographic prompt over the first `context` posts, with the blocks
/// in a random order drawn from `rng`.
pub fn build_demo_prompt<R: Rng + ?Sized>(
    user: &UserRecord,
    context: usize,
    rng: &mut R,
) -> Result<String, AnnotateError> {
    if user.post_count < context || user.tweets.len() < context {
        return Err(AnnotateError::InsufficientContext {
            user: user.id.clone(),
            have: user.post_count.min(user.tweets.len()),
            need: context,
        });
    }
    let tweets = user.tweets[..context].join("\n");
    let blocks: Vec<&str> = block_order(rng).into_iter().map(|i| BLOCKS[i].text).collect();
    Ok([DEMO_HEAD, &user.bio, DEMO_MID, &tweets, DEMO_TAIL, &blocks.join("\n")].join(" "))
}
