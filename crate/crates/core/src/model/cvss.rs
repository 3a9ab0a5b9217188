//! CVSS v3 base-metric descriptors.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackVector {
    N,
    A,
    L,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackComplexity {
    L,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrivilegesRequired {
    N,
    L,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UserInteraction {
    N,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    U,
    C,
}

/// Confidentiality, integrity or availability impact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Impact {
    H,
    L,
    N,
}

macro_rules! letter_enum {
    ($t:ty { $($v:ident),+ }) => {
        impl $t {
            pub const ALL: &'static [$t] = &[$(<$t>::$v),+];

            pub fn letter(self) -> char {
                match self { $(<$t>::$v => stringify!($v).chars().next().unwrap()),+ }
            }

            pub fn from_letter(c: char) -> Option<Self> {
                let up = c.to_ascii_uppercase();
                Self::ALL.iter().copied().find(|v| v.letter() == up)
            }
        }
    };
}

letter_enum!(AttackVector { N, A, L, P });
letter_enum!(AttackComplexity { L, H });
letter_enum!(PrivilegesRequired { N, L, H });
letter_enum!(UserInteraction { N, R });
letter_enum!(Scope { U, C });
letter_enum!(Impact { H, L, N });

/// The eight base metrics of a vector string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BaseVector {
    pub av: AttackVector,
    pub ac: AttackComplexity,
    pub pr: PrivilegesRequired,
    pub ui: UserInteraction,
    pub scope: Scope,
    pub c: Impact,
    pub i: Impact,
    pub a: Impact,
}

impl BaseVector {
    /// `AV:N/AC:L/...` without a version prefix.
    pub fn vector(&self) -> String {
        format!(
            "AV:{}/AC:{}/PR:{}/UI:{}/S:{}/C:{}/I:{}/A:{}",
            self.av.letter(),
            self.ac.letter(),
            self.pr.letter(),
            self.ui.letter(),
            self.scope.letter(),
            self.c.letter(),
            self.i.letter(),
            self.a.letter()
        )
    }
}

/// The eight base metrics plus the score they produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvssMetrics {
    pub av: AttackVector,
    pub ac: AttackComplexity,
    pub pr: PrivilegesRequired,
    pub ui: UserInteraction,
    pub scope: Scope,
    pub c: Impact,
    pub i: Impact,
    pub a: Impact,
    pub base_score: f64,
}

impl CvssMetrics {
    /// Attaches a score to a vector. Callers normally go through
    /// `remediation::cvss::score`, which computes it.
    pub fn with_score(v: BaseVector, base_score: f64) -> Self {
        CvssMetrics {
            av: v.av,
            ac: v.ac,
            pr: v.pr,
            ui: v.ui,
            scope: v.scope,
            c: v.c,
            i: v.i,
            a: v.a,
            base_score,
        }
    }

    pub fn base_vector(&self) -> BaseVector {
        BaseVector {
            av: self.av,
            ac: self.ac,
            pr: self.pr,
            ui: self.ui,
            scope: self.scope,
            c: self.c,
            i: self.i,
            a: self.a,
        }
    }

    pub fn vector(&self) -> String {
        self.base_vector().vector()
    }
}

impl fmt::Display for CvssMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CVSS:3.1/{} ({:.1})", self.vector(), self.base_score)
    }
}
