use std::fmt;

use serde::{Deserialize, Serialize};

/// One of the two hidden states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    A,
    B,
}

impl State {
    pub const ALL: [State; 2] = [State::A, State::B];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            State::A => 0,
            State::B => 1,
        }
    }

    #[inline]
    pub fn from_index(i: usize) -> State {
        if i == 0 {
            State::A
        } else {
            State::B
        }
    }

    #[inline]
    pub fn other(self) -> State {
        match self {
            State::A => State::B,
            State::B => State::A,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            State::A => 'a',
            State::B => 'b',
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Renders a path as a compact string over `{a,b}`.
pub fn path_string(states: &[State]) -> String {
    states.iter().map(|s| s.as_char()).collect()
}

/// Parses a compact `{a,b}` string back into states.
pub fn parse_path(s: &str) -> Option<Vec<State>> {
    s.chars()
        .map(|c| match c {
            'a' => Some(State::A),
            'b' => Some(State::B),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_round_trip() {
        let p = vec![State::A, State::B, State::B, State::A];
        assert_eq!(path_string(&p), "abba");
        assert_eq!(parse_path("abba").unwrap(), p);
        assert!(parse_path("abc").is_none());
    }
}
