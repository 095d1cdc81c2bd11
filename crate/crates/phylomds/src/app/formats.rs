//! On-disk formats: the distance matrix CSV, sampler trace CSV, binary
//! coordinate snapshots, fold-plan sidecars, benchmark reports, and run
//! metadata.
//!
//! Everything written here is deterministic for a fixed seed and config, so
//! reruns can be compared byte for byte. Floats go through `{:?}`, the
//! shortest representation that parses back to the same value.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::types::{DissimilarityData, LatentConfiguration, PairMask};
use crate::sampler::Draw;
use crate::select::FoldPlan;

fn read_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

fn write_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes the headered distance matrix: first column item labels, full
/// symmetric body, blank cells where the pair is unobserved, zeros on the
/// diagonal.
pub fn write_distance_csv(
    path: &Path,
    labels: &[String],
    data: &DissimilarityData,
) -> Result<()> {
    if labels.len() != data.n() {
        return Err(Error::invalid_argument(format!(
            "{} labels for {} items",
            labels.len(),
            data.n()
        )));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    let mut header = Vec::with_capacity(labels.len() + 1);
    header.push("item".to_string());
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(|e| write_err(path, e))?;

    let n = data.n();
    let mut row = Vec::with_capacity(n + 1);
    for i in 0..n {
        row.clear();
        row.push(labels[i].clone());
        for j in 0..n {
            if i == j {
                row.push("0".to_string());
            } else if data.mask().is_observed(i, j) {
                row.push(format!("{:?}", data.value(i, j)));
            } else {
                row.push(String::new());
            }
        }
        w.write_record(&row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a distance matrix CSV back into labels and data. Enforces the
/// format contract: square, labels consistent between header and first
/// column, values symmetric, blanks mirrored, diagonal zero or blank.
pub fn read_distance_csv(path: &Path) -> Result<(Vec<String>, DissimilarityData)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| read_err(path, e))?;

    let headers = rdr.headers().map_err(|e| read_err(path, e))?.clone();
    if headers.len() < 2 {
        return Err(Error::parse(path, "header must list at least one item"));
    }
    let labels: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let n = labels.len();
    for (idx, label) in labels.iter().enumerate() {
        if label.is_empty() {
            return Err(Error::parse(path, format!("item {idx} has an empty label")));
        }
        if labels[..idx].contains(label) {
            return Err(Error::parse(path, format!("duplicate item label {label:?}")));
        }
    }

    let mut values = vec![0.0f64; n * n];
    let mut flags = vec![false; n * n];
    let mut rows = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| read_err(path, e))?;
        if i >= n {
            return Err(Error::parse(path, format!("expected {n} rows, found more")));
        }
        if record.len() != n + 1 {
            return Err(Error::parse(
                path,
                format!("row {} has {} fields, expected {}", i + 2, record.len(), n + 1),
            ));
        }
        if record[0] != labels[i] {
            return Err(Error::parse(
                path,
                format!(
                    "row {} is labeled {:?} but the header says {:?}",
                    i + 2,
                    &record[0],
                    labels[i]
                ),
            ));
        }
        for j in 0..n {
            let cell = &record[j + 1];
            if i == j {
                if !cell.is_empty() && cell.parse::<f64>() != Ok(0.0) {
                    return Err(Error::parse(
                        path,
                        format!("diagonal cell for {:?} must be blank or 0, got {cell:?}", labels[i]),
                    ));
                }
                continue;
            }
            if cell.is_empty() {
                continue;
            }
            let y: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("cell ({:?}, {:?}) is not a number: {cell:?}", labels[i], labels[j]),
                )
            })?;
            values[i * n + j] = y;
            flags[i * n + j] = true;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(path, format!("expected {n} rows, found {rows}")));
    }

    let mask = PairMask::from_flags(n, flags)
        .map_err(|e| Error::parse(path, format!("observation pattern: {e}")))?;
    let data = DissimilarityData::new(n, values, mask)
        .map_err(|e| Error::parse(path, format!("matrix body: {e}")))?;
    Ok((labels, data))
}

/// Writes the per-draw trace: iteration, which block moved, whether it was
/// accepted, the unnormalized log posterior, the residual variance, the
/// diffusion covariance (trace first, then entries row-major), and the
/// active tree index.
pub fn write_trace_csv(path: &Path, draws: &[Draw], d: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    let mut header = vec![
        "iteration".to_string(),
        "block".to_string(),
        "accepted".to_string(),
        "log_posterior".to_string(),
        "sigma2".to_string(),
        "tr_sigma".to_string(),
        "tree".to_string(),
    ];
    for r in 0..d {
        for c in 0..d {
            header.push(format!("sigma_{r}_{c}"));
        }
    }
    w.write_record(&header).map_err(|e| write_err(path, e))?;

    let mut row = Vec::with_capacity(header.len());
    for draw in draws {
        row.clear();
        row.push(draw.iteration.to_string());
        row.push(draw.block.name().to_string());
        row.push(if draw.accepted { "1" } else { "0" }.to_string());
        row.push(format!("{:?}", draw.log_posterior));
        row.push(format!("{:?}", draw.sigma2));
        row.push(format!("{:?}", draw.sigma_mat.trace()));
        row.push(draw.tree_index.to_string());
        for r in 0..d {
            for c in 0..d {
                row.push(format!("{:?}", draw.sigma_mat[(r, c)]));
            }
        }
        w.write_record(&row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// One stored latent configuration with the residual variance that
/// accompanied it.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub iteration: u64,
    pub sigma2: f64,
    pub x: LatentConfiguration,
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"PMDSNAP\0";
const SNAPSHOT_VERSION: u32 = 1;

/// Binary snapshot log: little-endian header (magic, version, n, d, count)
/// followed by fixed-size records of iteration, sigma2, and row-major
/// coordinates.
pub fn write_snapshots(path: &Path, n: usize, d: usize, snaps: &[Snapshot]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(SNAPSHOT_MAGIC).map_err(io)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(snaps.len() as u64).to_le_bytes()).map_err(io)?;
    for snap in snaps {
        if snap.x.n() != n || snap.x.d() != d {
            return Err(Error::invalid_argument(format!(
                "snapshot at iteration {} is {}x{}, file is {n}x{d}",
                snap.iteration,
                snap.x.n(),
                snap.x.d()
            )));
        }
        w.write_all(&snap.iteration.to_le_bytes()).map_err(io)?;
        w.write_all(&snap.sigma2.to_le_bytes()).map_err(io)?;
        for &v in snap.x.coords() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_snapshots(path: &Path) -> Result<(usize, usize, Vec<Snapshot>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    fn take<const K: usize>(r: &mut impl Read, path: &Path, what: &str) -> Result<[u8; K]> {
        let mut buf = [0u8; K];
        r.read_exact(&mut buf)
            .map_err(|_| Error::parse(path, format!("truncated while reading {what}")))?;
        Ok(buf)
    }

    let magic: [u8; 8] = take(&mut r, path, "magic")?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::parse(path, "not a snapshot file (bad magic)"));
    }
    let version = u32::from_le_bytes(take(&mut r, path, "version")?);
    if version != SNAPSHOT_VERSION {
        return Err(Error::parse(path, format!("unsupported snapshot version {version}")));
    }
    let n = u64::from_le_bytes(take(&mut r, path, "item count")?) as usize;
    let d = u64::from_le_bytes(take(&mut r, path, "dimension")?) as usize;
    let count = u64::from_le_bytes(take(&mut r, path, "record count")?) as usize;
    if n.checked_mul(d).is_none() || count > (1 << 32) {
        return Err(Error::parse(path, "implausible snapshot header"));
    }

    let mut snaps = Vec::with_capacity(count);
    for rec in 0..count {
        let iteration = u64::from_le_bytes(take(&mut r, path, "record iteration")?);
        let sigma2 = f64::from_le_bytes(take(&mut r, path, "record sigma2")?);
        let mut coords = vec![0.0f64; n * d];
        for v in coords.iter_mut() {
            *v = f64::from_le_bytes(take(&mut r, path, "record coordinates")?);
        }
        let x = LatentConfiguration::new(n, d, coords)
            .map_err(|e| Error::parse(path, format!("record {rec}: {e}")))?;
        snaps.push(Snapshot {
            iteration,
            sigma2,
            x,
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::parse(path, "trailing bytes after the last record"));
    }
    Ok((n, d, snaps))
}

#[derive(Serialize, Deserialize)]
struct FoldPlanFile {
    k: usize,
    seed: u64,
    n: usize,
    assignments: Vec<[usize; 3]>,
}

/// Sidecar with the exact fold assignment, so a cross-validation run can be
/// reproduced or audited without rerunning the shuffle.
pub fn write_fold_plan(path: &Path, plan: &FoldPlan) -> Result<()> {
    let file = FoldPlanFile {
        k: plan.k(),
        seed: plan.seed(),
        n: plan.n(),
        assignments: plan
            .assignments()
            .iter()
            .map(|&(i, j, f)| [i, j, f])
            .collect(),
    };
    let text = toml::to_string(&file).expect("fold plan serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_fold_plan(path: &Path) -> Result<FoldPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: FoldPlanFile =
        toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    FoldPlan::from_parts(
        file.k,
        file.seed,
        file.n,
        file.assignments.iter().map(|&[i, j, f]| (i, j, f)).collect(),
    )
    .map_err(|e| Error::parse(path, e.to_string()))
}

/// Modeling conventions this build commits to; echoed into every metadata
/// file so downstream comparisons do not have to guess.
pub const CONVENTION_NOTES: [&str; 5] = [
    "residual variance moves by random-walk Metropolis on ln(sigma2) with a Jacobian term, not a conjugate draw",
    "the Wishart prior on the diffusion precision uses the rate convention: E[Sigma^-1] = d0 * T0^-1",
    "the likelihood includes the full -0.5*log(2*pi*sigma2) constant per observed pair",
    "dimension selection maximizes the held-out log predictive density",
    "trace log_posterior is the unnormalized joint: likelihood plus latent, variance, and precision prior terms",
];

/// Everything needed to rerun or audit a command, serialized as TOML.
#[derive(Serialize)]
pub struct RunMetadata<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub config_sha256: &'a str,
    pub engine: &'a str,
    pub host_cores: usize,
    pub conventions: Vec<&'a str>,
    pub config: &'a RunConfig,
}

pub fn write_metadata(path: &Path, meta: &RunMetadata) -> Result<()> {
    let text = toml::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of the raw config text, stored in metadata so artifacts can
/// be matched to the exact file that produced them.
pub fn config_sha256(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

pub fn host_cores() -> usize {
    std::thread::available_parallelism()
        .map(|v| v.get())
        .unwrap_or(1)
}

/// Reads a travel-edge list: header `from,to,probability`, one directed
/// edge per row.
pub fn read_edges_csv(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| read_err(path, e))?;
    let headers = rdr.headers().map_err(|e| read_err(path, e))?;
    let expect = ["from", "to", "probability"];
    let got: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if got != expect {
        return Err(Error::parse(
            path,
            format!("expected header {expect:?}, got {got:?}"),
        ));
    }
    let mut edges = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| read_err(path, e))?;
        if record.len() != 3 {
            return Err(Error::parse(
                path,
                format!("row {} has {} fields, expected 3", idx + 2, record.len()),
            ));
        }
        let p: f64 = record[2].parse().map_err(|_| {
            Error::parse(
                path,
                format!("row {}: probability {:?} is not a number", idx + 2, &record[2]),
            )
        })?;
        edges.push((record[0].to_string(), record[1].to_string(), p));
    }
    if edges.is_empty() {
        return Err(Error::parse(path, "edge list is empty"));
    }
    Ok(edges)
}

/// Reads a node-to-group assignment: header `node,group`.
pub fn read_groups_csv(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| read_err(path, e))?;
    let headers = rdr.headers().map_err(|e| read_err(path, e))?;
    let got: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if got != ["node", "group"] {
        return Err(Error::parse(
            path,
            format!("expected header [\"node\", \"group\"], got {got:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| read_err(path, e))?;
        if record.len() != 2 || record[0].is_empty() || record[1].is_empty() {
            return Err(Error::parse(
                path,
                format!("row {}: expected non-empty node and group", idx + 2),
            ));
        }
        rows.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(rows)
}

/// One timing measurement in the benchmark report. Rows for engines that
/// cannot run on this host carry the error in `status` and blank numbers.
#[derive(Clone, Debug)]
pub struct BenchmarkRow {
    pub n: usize,
    pub d: usize,
    pub engine: String,
    pub threads: usize,
    pub lane_width: usize,
    pub tile_size: String,
    pub device: String,
    pub op: String,
    pub repeats: usize,
    pub host_cores: usize,
    pub mean_seconds: Option<f64>,
    pub sd_seconds: Option<f64>,
    pub speedup_vs_serial: Option<f64>,
    pub status: String,
}

pub fn write_benchmark_csv(path: &Path, rows: &[BenchmarkRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record([
        "n",
        "d",
        "engine",
        "threads",
        "lane_width",
        "tile_size",
        "device",
        "op",
        "repeats",
        "host_cores",
        "mean_seconds",
        "sd_seconds",
        "speedup_vs_serial",
        "status",
    ])
    .map_err(|e| write_err(path, e))?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for row in rows {
        w.write_record([
            row.n.to_string(),
            row.d.to_string(),
            row.engine.clone(),
            row.threads.to_string(),
            row.lane_width.to_string(),
            row.tile_size.clone(),
            row.device.clone(),
            row.op.clone(),
            row.repeats.to_string(),
            row.host_cores.to_string(),
            fmt(row.mean_seconds),
            fmt(row.sd_seconds),
            fmt(row.speedup_vs_serial),
            row.status.clone(),
        ])
        .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::make_folds;

    fn strings(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn distance_csv_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let labels = strings(&["alpha", "beta", "gamma", "delta"]);
        let data = DissimilarityData::from_observed_pairs(
            4,
            &[(1, 0, 1.25), (2, 0, 0.1), (3, 1, 2.0), (3, 2, 0.333333333333)],
        )
        .unwrap();

        write_distance_csv(&path, &labels, &data).unwrap();
        let (labels2, data2) = read_distance_csv(&path).unwrap();
        assert_eq!(labels, labels2);
        assert_eq!(data.mask(), data2.mask());
        for (i, j) in data.mask().observed_pairs() {
            assert_eq!(data.value(i, j).to_bits(), data2.value(i, j).to_bits());
        }

        // save -> load -> save reproduces the file byte for byte
        let path2 = dir.path().join("d2.csv");
        write_distance_csv(&path2, &labels2, &data2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn distance_csv_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, text: &str| {
            let p = dir.path().join(name);
            std::fs::write(&p, text).unwrap();
            p
        };

        // value asymmetry
        let p = write("asym.csv", "item,a,b\na,0,1.0\nb,2.0,0\n");
        assert!(read_distance_csv(&p).is_err());

        // blank not mirrored
        let p = write("blank.csv", "item,a,b\na,0,1.0\nb,,0\n");
        assert!(read_distance_csv(&p).is_err());

        // nonzero diagonal
        let p = write("diag.csv", "item,a,b\na,0.5,1.0\nb,1.0,0\n");
        assert!(read_distance_csv(&p).is_err());

        // unparseable cell
        let p = write("nan.csv", "item,a,b\na,0,x\nb,x,0\n");
        assert!(read_distance_csv(&p).is_err());

        // row label disagrees with header
        let p = write("label.csv", "item,a,b\na,0,1.0\nc,1.0,0\n");
        assert!(read_distance_csv(&p).is_err());

        // duplicate labels
        let p = write("dup.csv", "item,a,a\na,0,1.0\na,1.0,0\n");
        assert!(read_distance_csv(&p).is_err());

        // missing row
        let p = write("short.csv", "item,a,b\na,0,1.0\n");
        assert!(read_distance_csv(&p).is_err());

        // negative observed value
        let p = write("neg.csv", "item,a,b\na,0,-1.0\nb,-1.0,0\n");
        assert!(read_distance_csv(&p).is_err());
    }

    #[test]
    fn diagonal_blank_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "item,a,b\na,,1.5\nb,1.5,\n").unwrap();
        let (_, data) = read_distance_csv(&p).unwrap();
        assert_eq!(data.value(1, 0), 1.5);
        assert_eq!(data.n_observed(), 1);
    }

    #[test]
    fn snapshots_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let snaps = vec![
            Snapshot {
                iteration: 10,
                sigma2: 0.75,
                x: LatentConfiguration::new(2, 3, vec![0.1, -0.2, 0.3, 1.0, 2.0, -3.5]).unwrap(),
            },
            Snapshot {
                iteration: 20,
                sigma2: 1.25,
                x: LatentConfiguration::new(2, 3, vec![0.0; 6]).unwrap(),
            },
        ];
        write_snapshots(&path, 2, 3, &snaps).unwrap();
        let (n, d, back) = read_snapshots(&path).unwrap();
        assert_eq!((n, d), (2, 3));
        assert_eq!(back.len(), 2);
        for (a, b) in snaps.iter().zip(&back) {
            assert_eq!(a.iteration, b.iteration);
            assert_eq!(a.sigma2.to_bits(), b.sigma2.to_bits());
            let bits =
                |x: &LatentConfiguration| x.coords().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.x), bits(&b.x));
        }
    }

    #[test]
    fn snapshot_reader_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let snaps = vec![Snapshot {
            iteration: 1,
            sigma2: 1.0,
            x: LatentConfiguration::new(1, 2, vec![1.0, 2.0]).unwrap(),
        }];
        write_snapshots(&path, 1, 2, &snaps).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let truncated = dir.path().join("t.bin");
        std::fs::write(&truncated, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_snapshots(&truncated).is_err());

        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        let bad_magic = dir.path().join("m.bin");
        std::fs::write(&bad_magic, &wrong).unwrap();
        assert!(read_snapshots(&bad_magic).is_err());

        let mut padded = bytes;
        padded.push(0);
        let trailing = dir.path().join("x.bin");
        std::fs::write(&trailing, &padded).unwrap();
        assert!(read_snapshots(&trailing).is_err());
    }

    #[test]
    fn fold_plan_round_trips_through_the_sidecar() {
        let data = DissimilarityData::from_observed_pairs(
            5,
            &[(1, 0, 1.0), (2, 0, 1.0), (3, 0, 1.0), (4, 2, 1.0), (4, 3, 1.0), (3, 2, 1.0)],
        )
        .unwrap();
        let plan = make_folds(&data, 3, 123).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("folds.toml");
        write_fold_plan(&path, &plan).unwrap();
        let back = read_fold_plan(&path).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn trace_csv_layout() {
        use crate::sampler::BlockKind;
        use nalgebra::DMatrix;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let draw = Draw {
            iteration: 5,
            log_posterior: -12.5,
            sigma2: 0.5,
            sigma_mat: DMatrix::from_row_slice(2, 2, &[2.0, 0.25, 0.25, 1.0]),
            tree_index: 1,
            x: LatentConfiguration::zeros(3, 2),
            block: BlockKind::X,
            accepted: true,
        };
        write_trace_csv(&path, &[draw], 2).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,block,accepted,log_posterior,sigma2,tr_sigma,tree,sigma_0_0,sigma_0_1,sigma_1_0,sigma_1_1"
        );
        assert_eq!(lines.next().unwrap(), "5,x,1,-12.5,0.5,3.0,1,2.0,0.25,0.25,1.0");
    }

    #[test]
    fn benchmark_rows_serialize_with_blanks_for_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        let rows = vec![BenchmarkRow {
            n: 64,
            d: 2,
            engine: "tiled_device".into(),
            threads: 1,
            lane_width: 4,
            tile_size: "16".into(),
            device: "native".into(),
            op: "likelihood".into(),
            repeats: 10,
            host_cores: 8,
            mean_seconds: None,
            sd_seconds: None,
            speedup_vs_serial: None,
            status: "capability not available: no native device".into(),
        }];
        write_benchmark_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.contains(",,,"), "blank numeric cells expected: {line}");
        assert!(line.contains("capability"));
        assert!(text.lines().next().unwrap().contains("host_cores"));
    }

    #[test]
    fn edge_and_group_readers_enforce_headers() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("edges.csv");
        std::fs::write(&good, "from,to,probability\nPAR,NYC,0.4\nNYC,PAR,0.25\n").unwrap();
        let edges = read_edges_csv(&good).unwrap();
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0], ("PAR".to_string(), "NYC".to_string(), 0.4));

        let bad_header = dir.path().join("bad.csv");
        std::fs::write(&bad_header, "source,target,p\nA,B,0.5\n").unwrap();
        assert!(read_edges_csv(&bad_header).is_err());

        let bad_value = dir.path().join("badv.csv");
        std::fs::write(&bad_value, "from,to,probability\nA,B,high\n").unwrap();
        assert!(read_edges_csv(&bad_value).is_err());

        let groups = dir.path().join("groups.csv");
        std::fs::write(&groups, "node,group\nPAR,FR\nNYC,US\n").unwrap();
        let parsed = read_groups_csv(&groups).unwrap();
        assert_eq!(parsed[1], ("NYC".to_string(), "US".to_string()));

        let bad_groups = dir.path().join("badg.csv");
        std::fs::write(&bad_groups, "city,country\nPAR,FR\n").unwrap();
        assert!(read_groups_csv(&bad_groups).is_err());
    }

    #[test]
    fn sha256_matches_the_reference_vector() {
        assert_eq!(
            config_sha256("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn metadata_echoes_the_resolved_config() {
        let cfg = RunConfig::from_toml_str(
            "[model]\nlatent_dim = 2\n\n[sampler]\niterations = 10\n\n[output]\ndirectory = \"out\"\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metadata.toml");
        let hash = config_sha256("whatever");
        let meta = RunMetadata {
            command: "fit",
            seed: 42,
            config_sha256: &hash,
            engine: "serial(threads=1, lane=4, tile=default, device=emulated)",
            host_cores: 4,
            conventions: CONVENTION_NOTES.to_vec(),
            config: &cfg,
        };
        write_metadata(&path, &meta).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("command = \"fit\""));
        assert!(text.contains(&hash));
        assert!(text.contains("rate convention"));
        assert!(text.contains("weight_x = 0.8"), "defaults echoed: {text}");
    }
}
