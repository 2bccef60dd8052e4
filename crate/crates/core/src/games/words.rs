//! Bundled word lists, one entry per line.

use std::sync::LazyLock;

fn lines(raw: &'static str) -> Vec<&'static str> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect()
}

macro_rules! word_list {
    ($name:ident, $file:literal) => {
        pub(crate) static $name: LazyLock<Vec<&'static str>> =
            LazyLock::new(|| lines(include_str!(concat!("../../data/", $file))));
    };
}

word_list!(CONTAINERS, "containers.txt");
word_list!(VALUABLES, "valuables.txt");
word_list!(DECOYS, "decoys.txt");
word_list!(NAMES, "names.txt");
word_list!(MF_SCHOOL, "mf_school.txt");
word_list!(MF_MAJOR, "mf_major.txt");
word_list!(MF_COMPANY, "mf_company.txt");
word_list!(MF_HOBBY, "mf_hobby.txt");
word_list!(MF_LOCATION, "mf_location.txt");
word_list!(MF_TIME, "mf_time.txt");

/// Attribute schema for generated friend lists.
pub(crate) fn mf_schema() -> Vec<(&'static str, &'static [&'static str])> {
    vec![
        ("School", MF_SCHOOL.as_slice()),
        ("Major", MF_MAJOR.as_slice()),
        ("Company", MF_COMPANY.as_slice()),
        ("Hobby", MF_HOBBY.as_slice()),
        ("Location Preference", MF_LOCATION.as_slice()),
        ("Time Preference", MF_TIME.as_slice()),
    ]
}
