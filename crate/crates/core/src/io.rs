//! File formats: JSON game specs and reports, CSV type sets, strategies and
//! figure data. CSV outputs open with `#` comment rows recording how they
//! were produced.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::game::{FiniteTypeSet, FunctionSpec, GameSpec, School, SymmetricStrategy, TypePoint};
use crate::market::Action;
use crate::sampling::DistributionSpec;
use crate::VERSION;

/// Weight tolerance when reading strategy files.
pub const FILE_WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchoolEntry {
    pub id: usize,
    pub capacity: u32,
    pub value: FunctionSpec,
    pub score: FunctionSpec,
}

/// On-disk game specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpecFile {
    pub n: usize,
    pub l: usize,
    pub schools: Vec<SchoolEntry>,
    pub types: DistributionSpec,
}

impl GameSpecFile {
    pub fn into_game(self) -> Result<GameSpec> {
        let mut schools = self.schools;
        schools.sort_by_key(|s| s.id);
        for (pos, s) in schools.iter().enumerate() {
            if s.id != pos + 1 {
                return Err(invalid("school ids must be exactly 1..=m"));
            }
        }
        let schools = schools
            .into_iter()
            .map(|s| School {
                capacity: s.capacity,
                value: s.value,
                score: s.score,
            })
            .collect();
        GameSpec::new(self.n, self.l, schools, self.types)
    }

    pub fn from_game(game: &GameSpec) -> Self {
        GameSpecFile {
            n: game.n,
            l: game.l,
            schools: game
                .schools
                .iter()
                .enumerate()
                .map(|(j, s)| SchoolEntry {
                    id: j + 1,
                    capacity: s.capacity,
                    value: s.value.clone(),
                    score: s.score.clone(),
                })
                .collect(),
            types: game.types.clone(),
        }
    }
}

pub fn parse_game(text: &str) -> Result<GameSpec> {
    let file: GameSpecFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("game spec: {e}")))?;
    file.into_game()
}

pub fn game_to_json(game: &GameSpec) -> String {
    serde_json::to_string_pretty(&GameSpecFile::from_game(game)).expect("game specs serialize")
}

pub fn read_game(path: &Path) -> Result<GameSpec> {
    parse_game(&std::fs::read_to_string(path)?)
}

/// How an output file was produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub command: String,
    pub seed: Option<u64>,
    pub version: String,
}

impl Provenance {
    pub fn new(command: impl Into<String>, seed: Option<u64>) -> Self {
        Provenance {
            command: command.into(),
            seed,
            version: VERSION.to_string(),
        }
    }

    fn write_comments<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# command: {}", self.command)?;
        match self.seed {
            Some(seed) => writeln!(w, "# seed: {seed}")?,
            None => writeln!(w, "# seed: none")?,
        }
        writeln!(w, "# version: {}", self.version)?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what} {field:?}")))
}

/// Writes a CSV with provenance comments, a header row and `rows`.
pub fn write_csv<W: Write>(
    w: &mut W,
    provenance: &Provenance,
    columns: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    provenance.write_comments(w)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns).map_err(csv_error)?;
    for row in rows {
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `type_index, coord_*, score_*` and `weight` when weighted.
pub fn write_types<W: Write>(
    w: &mut W,
    types: &FiniteTypeSet,
    provenance: &Provenance,
) -> Result<()> {
    let d = types.point(0).dim();
    let m = types.m();
    let mut columns = vec!["type_index".to_string()];
    columns.extend((0..d).map(|c| format!("coord_{c}")));
    columns.extend((1..=m).map(|j| format!("score_{j}")));
    if types.weights().is_some() {
        columns.push("weight".into());
    }
    let rows = (0..types.k()).map(|i| {
        let mut row = vec![i.to_string()];
        row.extend(types.point(i).coords().iter().map(|&x| format_f64(x)));
        row.extend((1..=m).map(|j| format_f64(types.score(j, i))));
        if let Some(w) = types.weights() {
            row.push(format_f64(w[i]));
        }
        row
    });
    write_csv(w, provenance, &columns, rows)
}

/// Reads a type set; scores are recomputed from the coordinates.
pub fn parse_types(text: &str, game: &GameSpec) -> Result<FiniteTypeSet> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let coord_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("coord_"))
        .map(|(c, _)| c)
        .collect();
    let index_col = headers.iter().position(|h| h == "type_index");
    let weight_col = headers.iter().position(|h| h == "weight");
    if coord_cols.is_empty() {
        return Err(Error::Parse("types file has no coord_ columns".into()));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        if let Some(c) = index_col {
            if record[c] != row.to_string() {
                return Err(Error::Parse(format!(
                    "type_index {} out of order",
                    &record[c]
                )));
            }
        }
        let coords = coord_cols
            .iter()
            .map(|&c| parse_f64(&record[c], "coordinate"))
            .collect::<Result<Vec<_>>>()?;
        points.push(TypePoint::new(coords)?);
        if let Some(c) = weight_col {
            weights.push(parse_f64(&record[c], "weight")?);
        }
    }
    let weights = weight_col.map(|_| weights);
    FiniteTypeSet::new(game, points, weights)
}

pub fn read_types(path: &Path, game: &GameSpec) -> Result<FiniteTypeSet> {
    parse_types(&std::fs::read_to_string(path)?, game)
}

/// One row per (type, action in its support).
pub fn write_strategy<W: Write>(
    w: &mut W,
    strategy: &SymmetricStrategy,
    types: &FiniteTypeSet,
    provenance: &Provenance,
) -> Result<()> {
    let d = types.point(0).dim();
    let mut columns = vec!["type_index".to_string()];
    columns.extend((0..d).map(|c| format!("coord_{c}")));
    columns.push("action".into());
    columns.push("weight".into());
    let mut rows = Vec::new();
    for i in 0..strategy.k() {
        for (a, weight) in strategy.mix(i) {
            let mut row = vec![i.to_string()];
            row.extend(types.point(i).coords().iter().map(|&x| format_f64(x)));
            row.push(a.to_string());
            row.push(format_f64(*weight));
            rows.push(row);
        }
    }
    write_csv(w, provenance, &columns, rows)
}

/// Reads a strategy for `types`; each type's weights must sum to one within
/// [`FILE_WEIGHT_TOLERANCE`].
pub fn parse_strategy(text: &str, types: &FiniteTypeSet) -> Result<SymmetricStrategy> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("strategy file lacks a {name} column")))
    };
    let (index_col, action_col, weight_col) = (col("type_index")?, col("action")?, col("weight")?);
    let mut mixes: BTreeMap<usize, Vec<(Action, f64)>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let i: usize = record[index_col]
            .parse()
            .map_err(|_| Error::Parse(format!("bad type_index {:?}", &record[index_col])))?;
        let action: Action = record[action_col].parse()?;
        let weight = parse_f64(&record[weight_col], "weight")?;
        mixes.entry(i).or_default().push((action, weight));
    }
    let k = types.k();
    if mixes.len() != k || mixes.keys().next_back() != Some(&(k - 1)) {
        return Err(invalid(format!(
            "strategy covers {} type indices, type set has {k}",
            mixes.len()
        )));
    }
    let mixes = mixes
        .into_iter()
        .map(|(i, mut mix)| {
            let total: f64 = mix.iter().map(|(_, w)| w).sum();
            if (total - 1.0).abs() > FILE_WEIGHT_TOLERANCE {
                return Err(invalid(format!("type {i} weights sum to {total}")));
            }
            if (total - 1.0).abs() > crate::game::WEIGHT_TOLERANCE {
                for (_, w) in &mut mix {
                    *w /= total;
                }
            }
            Ok(mix)
        })
        .collect::<Result<Vec<_>>>()?;
    SymmetricStrategy::new(mixes)
}

pub fn read_strategy(path: &Path, types: &FiniteTypeSet) -> Result<SymmetricStrategy> {
    parse_strategy(&std::fs::read_to_string(path)?, types)
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// JSON document: the body's fields next to a `provenance` object.
pub fn write_json<W: Write, T: Serialize>(
    w: &mut W,
    body: &T,
    provenance: &Provenance,
) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, &Document { provenance, body })
        .map_err(|e| Error::Parse(format!("json: {e}")))?;
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{example_game, sample_types};

    #[test]
    fn game_round_trip() {
        let game = example_game("fig6", 0.1, None).unwrap();
        let text = game_to_json(&game);
        assert_eq!(parse_game(&text).unwrap(), game);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text =
            r#"{"n": 2, "l": 1, "extra": 1, "schools": [], "types": {"kind": "uniform_interval"}}"#;
        assert!(matches!(parse_game(text), Err(Error::Parse(_))));
        let diag = r#"{"n": 2, "l": 1, "schools": [{"id": 1, "capacity": 1,
            "value": {"kind": "const", "c": 1.0}, "score": {"kind": "coord", "dim": 0}}],
            "types": {"kind": "uniform_diagonal", "d": 3}}"#;
        let err = parse_game(diag).unwrap_err().to_string();
        assert!(err.contains("\"d\""), "{err}");
    }

    #[test]
    fn types_and_strategy_round_trip() {
        let game = example_game("fig4", 0.0, None).unwrap();
        let types = sample_types(&game.types, 6, 3, &game).unwrap();
        let prov = Provenance::new("test", Some(3));
        let mut buf = Vec::new();
        write_types(&mut buf, &types, &prov).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# command: test\n# seed: 3\n"));
        let back = parse_types(&text, &game).unwrap();
        assert_eq!(back, types);

        let lists = [
            Action::new(vec![1, 3]).unwrap(),
            Action::new(vec![2, 3]).unwrap(),
        ];
        let mut mixes: Vec<Vec<(Action, f64)>> =
            vec![lists.iter().map(|a| (a.clone(), 0.5)).collect(); 6];
        mixes[2] = vec![(Action::empty(), 1.0 / 3.0), (lists[0].clone(), 2.0 / 3.0)];
        let strategy = SymmetricStrategy::new(mixes).unwrap();
        let mut buf = Vec::new();
        write_strategy(&mut buf, &strategy, &types, &prov).unwrap();
        let back = parse_strategy(std::str::from_utf8(&buf).unwrap(), &types).unwrap();
        assert_eq!(back, strategy);
    }

    #[test]
    fn strategy_weights_must_sum_to_one() {
        let game = example_game("fig4", 0.0, None).unwrap();
        let types = sample_types(&game.types, 3, 3, &game).unwrap();
        let text = "type_index,coord_0,action,weight\n0,0.1,1,1\n1,0.2,2,0.9\n2,0.3,,1\n";
        assert!(parse_strategy(text, &types).is_err());
        let ok = "type_index,coord_0,action,weight\n0,0.1,1,1\n1,0.2,2;1,1\n2,0.3,,1\n";
        let s = parse_strategy(ok, &types).unwrap();
        assert!(s.pure_action(2).unwrap().is_empty());
    }
}
