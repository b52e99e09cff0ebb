//! Malformed inputs and the exact error each must produce.

use gravcat::io::{self, ParseError};
use gravcat::Mode;

pub enum Expect {
    Exact(ParseError),
    Json,
    Binary,
}

pub struct Case {
    pub name: &'static str,
    pub result: Result<(), ParseError>,
    pub expect: Expect,
}

impl Case {
    pub fn check(&self) -> Result<(), String> {
        let err = match &self.result {
            Ok(()) => return Err(format!("{}: parsed without error", self.name)),
            Err(e) => e,
        };
        let ok = match &self.expect {
            Expect::Exact(want) => err == want,
            Expect::Json => matches!(err, ParseError::Json(_)),
            Expect::Binary => matches!(err, ParseError::Binary(_)),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{}: got {err:?}", self.name))
        }
    }
}

const ZONES: &str = "zone_id,lat,lon,population,workers\n";
const OPPS: &str = "zone_id,kind,count\n";
const MATRIX: &str = "origin_id,destination_id,minutes\n";
const TRIPS: &str = "mode,purpose,duration_min\n";
const DEMO: &str = "zone_id,poverty,minority,unemployment,low_education,zero_vehicle,single_parent\n";

fn zones(body: &str) -> Result<(), ParseError> {
    io::parse_zones(format!("{ZONES}{body}").as_bytes()).map(drop)
}

fn opps(body: &str) -> Result<(), ParseError> {
    io::parse_opportunities(format!("{OPPS}{body}").as_bytes()).map(drop)
}

fn matrix(body: &str) -> Result<(), ParseError> {
    let ids = ["A", "B"].map(String::from);
    io::parse_matrix(format!("{MATRIX}{body}").as_bytes(), Mode::Drive, 90.0, &ids).map(drop)
}

fn trips(text: &str) -> Result<(), ParseError> {
    io::parse_trips(text.as_bytes()).map(drop)
}

fn demo(body: &str) -> Result<(), ParseError> {
    io::parse_demographics(format!("{DEMO}{body}").as_bytes()).map(drop)
}

pub fn cases() -> Vec<Case> {
    use ParseError::*;
    let header = |found: &str| {
        Expect::Exact(MissingHeader { expected: "zone_id,lat,lon,population,workers".into(), found: found.into() })
    };
    vec![
        Case { name: "empty file", result: io::parse_zones("".as_bytes()).map(drop), expect: header("") },
        Case {
            name: "data row where the header belongs",
            result: io::parse_zones("A,41.88,-87.63,1200,800\n".as_bytes()).map(drop),
            expect: header("A,41.88,-87.63,1200,800"),
        },
        Case {
            name: "header columns out of order",
            result: io::parse_zones("zone_id,lon,lat,population,workers\n".as_bytes()).map(drop),
            expect: header("zone_id,lon,lat,population,workers"),
        },
        Case {
            name: "short row",
            result: zones("A,41.88,-87.63,1200,800\nB,41.89,-87.62,600\n"),
            expect: Expect::Exact(BadFieldCount { line: 3, expected: 5, found: 4 }),
        },
        Case {
            name: "non-numeric latitude",
            result: zones("A,x,1,2,3\n"),
            expect: Expect::Exact(UnparsableNumber { line: 2, column: "lat" }),
        },
        Case {
            name: "NaN population",
            result: zones("A,41.88,-87.63,NaN,800\n"),
            expect: Expect::Exact(UnparsableNumber { line: 2, column: "population" }),
        },
        Case {
            name: "quoted thousands separator",
            result: zones("A,41.88,-87.63,\"1,200\",800\n"),
            expect: Expect::Exact(UnparsableNumber { line: 2, column: "population" }),
        },
        Case {
            name: "negative workers",
            result: zones("A,41.88,-87.63,1200,800\nB,41.89,-87.62,600,-1\n"),
            expect: Expect::Exact(NegativeCount { line: 3, column: "workers" }),
        },
        Case {
            name: "duplicate zone",
            result: zones("A,41.88,-87.63,1200,800\nB,41.89,-87.62,600,300\nA,41.87,-87.64,200,150\n"),
            expect: Expect::Exact(DuplicateZone { line: 4, id: "A".into() }),
        },
        Case {
            name: "latitude out of range",
            result: zones("A,95,-87.63,1200,800\n"),
            expect: Expect::Exact(InvalidValue { line: 2, column: "lat", reason: "95 outside [-90, 90]".into() }),
        },
        Case {
            name: "negative opportunity count",
            result: opps("A,jobs_total,5\nA,leisure,-2\n"),
            expect: Expect::Exact(NegativeCount { line: 3, column: "count" }),
        },
        Case {
            name: "unquoted thousands separator",
            result: opps("A,jobs_total,1,000\n"),
            expect: Expect::Exact(BadFieldCount { line: 2, expected: 3, found: 4 }),
        },
        Case {
            name: "decimal comma in minutes",
            result: matrix("A,B,12,5\n"),
            expect: Expect::Exact(BadFieldCount { line: 2, expected: 3, found: 4 }),
        },
        Case {
            name: "infinite travel time",
            result: matrix("A,B,1\nB,A,inf\n"),
            expect: Expect::Exact(UnparsableNumber { line: 3, column: "minutes" }),
        },
        Case {
            name: "negative travel time",
            result: matrix("A,B,-3\n"),
            expect: Expect::Exact(NegativeCount { line: 2, column: "minutes" }),
        },
        Case {
            name: "unknown travel mode",
            result: trips(&format!("{TRIPS}drive,work,12\ncar,work,10\n")),
            expect: Expect::Exact(InvalidValue {
                line: 3,
                column: "mode",
                reason: "unknown mode 'car' (expected drive, walk or bike)".into(),
            }),
        },
        Case {
            name: "weighted trips missing a weight",
            result: trips("mode,purpose,duration_min,weight\ndrive,work,12,1.5\nwalk,shop,8\n"),
            expect: Expect::Exact(BadFieldCount { line: 3, expected: 4, found: 3 }),
        },
        Case {
            name: "non-numeric demographic factor",
            result: demo("A,0.1,0.2,0.3,0.4,0.5,0.6\nB,high,0.2,0.3,0.4,0.5,0.6\n"),
            expect: Expect::Exact(UnparsableNumber { line: 3, column: "poverty" }),
        },
        Case {
            name: "duplicate demographic zone",
            result: demo("A,0.1,0.2,0.3,0.4,0.5,0.6\nA,0.1,0.2,0.3,0.4,0.5,0.6\n"),
            expect: Expect::Exact(DuplicateZone { line: 3, id: "A".into() }),
        },
        Case {
            name: "params object instead of array",
            result: io::parse_params(r#"{"purpose":"work","mode":"drive","alpha":0.008,"beta":1.467}"#.as_bytes()).map(drop),
            expect: Expect::Json,
        },
        Case {
            name: "truncated binary matrix",
            result: io::parse_matrix_binary(&b"GCAT01\x00\x00\x00\x00"[..]).map(drop),
            expect: Expect::Binary,
        },
    ]
}
