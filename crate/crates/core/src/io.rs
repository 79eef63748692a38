//! Tab-separated file formats: site manifest, beta matrix, group labels,
//! ground truth, DMR calls, filter diagnostics and the benchmark table.
//!
//! Output files are written to a temporary file in the destination
//! directory and atomically renamed, so failed runs never leave partial
//! files behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::caller::DmrCall;
use crate::data::{MethylationDataset, Site};
use crate::error::{Error, Result};
use crate::filter::FilterDiag;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content.lines().map(|l| l.to_string()).collect())
}

/// Write `content` atomically (temp file + rename in the same directory).
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Manifest: `chrom  pos  cpg_id`, sorted, one row per site.
pub fn read_manifest(path: &Path) -> Result<Vec<Site>> {
    let lines = read_lines(path)?;
    let mut it = lines.iter().enumerate();
    let (_, header) = it
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty manifest"))?;
    if header.split('\t').collect::<Vec<_>>() != ["chrom", "pos", "cpg_id"] {
        return Err(parse_err(path, 1, "expected header 'chrom\\tpos\\tcpg_id'"));
    }
    let mut sites = Vec::new();
    for (idx, line) in it {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, idx + 1, format!("expected 3 fields, got {}", fields.len())));
        }
        let pos: u64 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("bad position '{}'", fields[1])))?;
        sites.push(Site {
            chrom: fields[0].to_string(),
            pos,
            cpg_id: fields[2].to_string(),
        });
    }
    Ok(sites)
}

pub fn write_manifest(path: &Path, sites: &[Site]) -> Result<()> {
    let mut out = String::from("chrom\tpos\tcpg_id\n");
    for s in sites {
        writeln!(out, "{}\t{}\t{}", s.chrom, s.pos, s.cpg_id).unwrap();
    }
    write_atomic(path, &out)
}

/// Beta matrix: first column `cpg_id`, remaining columns sample ids,
/// missing cells `NA`. Rows must match the manifest order.
pub fn read_beta(path: &Path, sites: &[Site]) -> Result<(Vec<Vec<Option<f64>>>, Vec<String>)> {
    let lines = read_lines(path)?;
    let mut it = lines.iter().enumerate();
    let (_, header) = it.next().ok_or_else(|| parse_err(path, 1, "empty beta matrix"))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.first() != Some(&"cpg_id") {
        return Err(parse_err(path, 1, "first column must be 'cpg_id'"));
    }
    let samples: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    if samples.is_empty() {
        return Err(parse_err(path, 1, "beta matrix has no sample columns"));
    }
    let mut beta = Vec::with_capacity(sites.len());
    let mut row_count = 0usize;
    for (idx, line) in it {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != samples.len() + 1 {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {} fields, got {}", samples.len() + 1, fields.len()),
            ));
        }
        if row_count >= sites.len() {
            return Err(parse_err(path, idx + 1, "more rows than manifest sites"));
        }
        if fields[0] != sites[row_count].cpg_id {
            return Err(parse_err(
                path,
                idx + 1,
                format!(
                    "cpg_id '{}' does not match manifest order ('{}')",
                    fields[0], sites[row_count].cpg_id
                ),
            ));
        }
        let row: Vec<Option<f64>> = fields[1..]
            .iter()
            .map(|f| {
                if *f == "NA" {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|_| parse_err(path, idx + 1, format!("bad beta value '{f}'")))
                }
            })
            .collect::<Result<_>>()?;
        beta.push(row);
        row_count += 1;
    }
    if row_count != sites.len() {
        return Err(parse_err(
            path,
            lines.len(),
            format!("{} rows for {} manifest sites", row_count, sites.len()),
        ));
    }
    Ok((beta, samples))
}

pub fn write_beta(path: &Path, dataset: &MethylationDataset) -> Result<()> {
    let mut out = String::from("cpg_id");
    for s in &dataset.samples {
        write!(out, "\t{s}").unwrap();
    }
    out.push('\n');
    for (i, site) in dataset.sites.iter().enumerate() {
        write!(out, "{}", site.cpg_id).unwrap();
        for v in &dataset.beta[i] {
            match v {
                Some(b) => write!(out, "\t{b:.6}").unwrap(),
                None => write!(out, "\tNA").unwrap(),
            }
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

/// Group file: `sample_id  group_label`; group indices follow first
/// appearance order in this file.
pub fn read_groups(path: &Path) -> Result<Vec<(String, String)>> {
    let lines = read_lines(path)?;
    let mut it = lines.iter().enumerate();
    let (_, header) = it.next().ok_or_else(|| parse_err(path, 1, "empty group file"))?;
    if header.split('\t').collect::<Vec<_>>() != ["sample_id", "group_label"] {
        return Err(parse_err(path, 1, "expected header 'sample_id\\tgroup_label'"));
    }
    let mut groups = Vec::new();
    for (idx, line) in it {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, idx + 1, format!("expected 2 fields, got {}", fields.len())));
        }
        groups.push((fields[0].to_string(), fields[1].to_string()));
    }
    Ok(groups)
}

pub fn write_groups(path: &Path, dataset: &MethylationDataset) -> Result<()> {
    let mut out = String::from("sample_id\tgroup_label\n");
    for (j, s) in dataset.samples.iter().enumerate() {
        writeln!(out, "{s}\t{}", dataset.group_labels[dataset.group_of[j]]).unwrap();
    }
    write_atomic(path, &out)
}

/// Assemble a dataset from the three input files.
pub fn load_dataset(manifest: &Path, beta: &Path, groups: &Path) -> Result<MethylationDataset> {
    let sites = read_manifest(manifest)?;
    let (matrix, samples) = read_beta(beta, &sites)?;
    let group_rows = read_groups(groups)?;
    // map labels in first-appearance order of the group file
    let mut labels_in_order: Vec<String> = Vec::new();
    for (_, label) in &group_rows {
        if !labels_in_order.contains(label) {
            labels_in_order.push(label.clone());
        }
    }
    let labels: Vec<String> = samples
        .iter()
        .map(|s| {
            group_rows
                .iter()
                .find(|(sample, _)| sample == s)
                .map(|(_, label)| label.clone())
                .ok_or_else(|| {
                    Error::Domain(format!("sample '{s}' has no group label in {}", groups.display()))
                })
        })
        .collect::<Result<_>>()?;
    let ds = MethylationDataset::new(sites, matrix, samples, labels)?;
    // keep the group-file label order even if the matrix columns differ
    if ds.group_labels != labels_in_order {
        let remap: Vec<usize> = ds
            .group_labels
            .iter()
            .map(|l| labels_in_order.iter().position(|x| x == l).unwrap())
            .collect();
        let mut reordered = ds;
        reordered.group_of = reordered.group_of.iter().map(|&k| remap[k]).collect();
        reordered.group_labels = labels_in_order;
        return Ok(reordered);
    }
    Ok(ds)
}

/// Ground truth per window: `window  is_dmr`, 1-based.
pub fn write_truth(path: &Path, truth: &[bool]) -> Result<()> {
    let mut out = String::from("window\tis_dmr\n");
    for (t, &d) in truth.iter().enumerate() {
        writeln!(out, "{}\t{}", t + 1, if d { 1 } else { 0 }).unwrap();
    }
    write_atomic(path, &out)
}

pub fn read_truth(path: &Path) -> Result<Vec<bool>> {
    let lines = read_lines(path)?;
    let mut it = lines.iter().enumerate();
    let (_, header) = it.next().ok_or_else(|| parse_err(path, 1, "empty truth file"))?;
    if header.split('\t').collect::<Vec<_>>() != ["window", "is_dmr"] {
        return Err(parse_err(path, 1, "expected header 'window\\tis_dmr'"));
    }
    let mut truth = Vec::new();
    for (idx, line) in it {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, idx + 1, "expected 2 fields"));
        }
        truth.push(fields[1] == "1" || fields[1] == "true");
    }
    Ok(truth)
}

/// DMR calls: `chrom  window  start  end  n_sites  log_bf  is_dmr`.
pub fn write_calls(path: &Path, calls: &[DmrCall]) -> Result<()> {
    let mut out = String::from("chrom\twindow\tstart\tend\tn_sites\tlog_bf\tis_dmr\n");
    for c in calls {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.4}\t{}",
            c.chrom,
            c.window,
            c.start,
            c.end,
            c.n_sites,
            c.log_bf,
            if c.is_dmr { 1 } else { 0 }
        )
        .unwrap();
    }
    write_atomic(path, &out)
}

/// Parsed back just enough to re-threshold: (chrom, window, start, end,
/// n_sites, log_bf).
pub type CallRow = (String, usize, u64, u64, usize, f64);

pub fn read_calls(path: &Path) -> Result<Vec<CallRow>> {
    let lines = read_lines(path)?;
    let mut it = lines.iter().enumerate();
    let (_, header) = it.next().ok_or_else(|| parse_err(path, 1, "empty calls file"))?;
    let expect = ["chrom", "window", "start", "end", "n_sites", "log_bf", "is_dmr"];
    if header.split('\t').collect::<Vec<_>>() != expect {
        return Err(parse_err(path, 1, "unexpected calls header"));
    }
    let mut rows = Vec::new();
    for (idx, line) in it {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(parse_err(path, idx + 1, "expected 7 fields"));
        }
        let bad = |what: &str| parse_err(path, idx + 1, format!("bad {what}"));
        rows.push((
            f[0].to_string(),
            f[1].parse().map_err(|_| bad("window"))?,
            f[2].parse().map_err(|_| bad("start"))?,
            f[3].parse().map_err(|_| bad("end"))?,
            f[4].parse().map_err(|_| bad("n_sites"))?,
            f[5].parse().map_err(|_| bad("log_bf"))?,
        ));
    }
    Ok(rows)
}

/// Filter diagnostics: `window  size  log_total_weight  ess  wlow  wup`.
pub fn write_diagnostics(path: &Path, diags: &[FilterDiag]) -> Result<()> {
    let mut out = String::from("window\tsize\tlog_total_weight\tess\twlow\twup\n");
    for d in diags {
        writeln!(
            out,
            "{}\t{}\t{:.4}\t{:.2}\t{:.6}\t{:.6}",
            d.window + 1,
            d.size,
            d.log_total_weight,
            d.ess,
            d.w_low_eff,
            d.w_up_eff
        )
        .unwrap();
    }
    write_atomic(path, &out)
}

/// Benchmark table row: per-window misclassification rates plus the mean
/// minutes per window.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: String,
    pub rho: f64,
    pub rates: Vec<f64>,
    pub minutes_per_window: f64,
}

pub fn write_benchmark_table(path: &Path, rows: &[BenchmarkRow]) -> Result<()> {
    let windows = rows.first().map_or(0, |r| r.rates.len());
    let mut out = String::from("method\trho");
    for w in 1..=windows {
        write!(out, "\tw{w}").unwrap();
    }
    out.push_str("\tminutes\n");
    for r in rows {
        write!(out, "{}\t{}", r.method, r.rho).unwrap();
        for rate in &r.rates {
            write!(out, "\t{rate:.4}").unwrap();
        }
        writeln!(out, "\t{:.4}", r.minutes_per_window).unwrap();
    }
    write_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dataset_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = crate::sim::SimConfig {
            n_control: 2,
            n_case: 3,
            sites_per_window: 10,
            windows: 2,
            wavelet_levels: vec![2, 2],
            ar1_variances: vec![0.16, 0.36],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ds, truth) = crate::sim::simulate_dataset(&cfg, 0.0, &mut rng).unwrap();

        let manifest = dir.path().join("manifest.tsv");
        let beta = dir.path().join("beta.tsv");
        let groups = dir.path().join("groups.tsv");
        write_manifest(&manifest, &ds.sites).unwrap();
        write_beta(&beta, &ds).unwrap();
        write_groups(&groups, &ds).unwrap();
        let truth_path = dir.path().join("truth.tsv");
        write_truth(&truth_path, &truth).unwrap();

        let loaded = load_dataset(&manifest, &beta, &groups).unwrap();
        assert_eq!(loaded.sites, ds.sites);
        assert_eq!(loaded.samples, ds.samples);
        assert_eq!(loaded.group_of, ds.group_of);
        assert_eq!(loaded.group_labels, ds.group_labels);
        for (a, b) in loaded.beta.iter().zip(&ds.beta) {
            for (x, y) in a.iter().zip(b) {
                let (x, y) = (x.unwrap(), y.unwrap());
                assert!((x - y).abs() < 1e-6, "{x} vs {y}");
            }
        }
        assert_eq!(read_truth(&truth_path).unwrap(), truth);
    }

    #[test]
    fn missing_values_round_trip_as_na() {
        let dir = tempfile::tempdir().unwrap();
        let sites = vec![
            Site { chrom: "chr1".into(), pos: 1, cpg_id: "a".into() },
            Site { chrom: "chr1".into(), pos: 2, cpg_id: "b".into() },
        ];
        let ds = MethylationDataset::new(
            sites.clone(),
            vec![vec![Some(0.25), None], vec![None, Some(0.5)]],
            vec!["s1".into(), "s2".into()],
            vec!["g1".into(), "g2".into()],
        )
        .unwrap();
        let beta = dir.path().join("beta.tsv");
        write_beta(&beta, &ds).unwrap();
        let (matrix, samples) = read_beta(&beta, &sites).unwrap();
        assert_eq!(samples, vec!["s1".to_string(), "s2".to_string()]);
        assert_eq!(matrix[0][1], None);
        assert_eq!(matrix[1][0], None);
        assert!((matrix[0][0].unwrap() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn parse_errors_carry_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        std::fs::write(&path, "chrom\tpos\tcpg_id\nchr1\toops\tcg1\n").unwrap();
        match read_manifest(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn group_file_order_defines_group_indices() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.tsv");
        let beta = dir.path().join("b.tsv");
        let groups = dir.path().join("g.tsv");
        std::fs::write(&manifest, "chrom\tpos\tcpg_id\nchr1\t1\tcg1\n").unwrap();
        // matrix columns list the case sample first
        std::fs::write(&beta, "cpg_id\ts_case\ts_ctrl\ncg1\t0.5\t0.5\n").unwrap();
        // but the group file lists control first: control becomes group 0
        std::fs::write(&groups, "sample_id\tgroup_label\ns_ctrl\tcontrol\ns_case\tcase\n").unwrap();
        let ds = load_dataset(&manifest, &beta, &groups).unwrap();
        assert_eq!(ds.group_labels, vec!["control".to_string(), "case".to_string()]);
        assert_eq!(ds.group_of, vec![1, 0]);
    }

    #[test]
    fn missing_group_label_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.tsv");
        let beta = dir.path().join("b.tsv");
        let groups = dir.path().join("g.tsv");
        std::fs::write(&manifest, "chrom\tpos\tcpg_id\nchr1\t1\tcg1\n").unwrap();
        std::fs::write(&beta, "cpg_id\ts1\ts2\ncg1\t0.5\t0.5\n").unwrap();
        std::fs::write(&groups, "sample_id\tgroup_label\ns1\ta\n").unwrap();
        assert!(load_dataset(&manifest, &beta, &groups).is_err());
    }

    #[test]
    fn calls_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calls.tsv");
        let calls = vec![DmrCall {
            window: 1,
            chrom: "chr1".into(),
            start: 100,
            end: 9_900,
            n_sites: 100,
            log_bf: -12.3456,
            is_dmr: true,
            threshold: -5.0,
        }];
        write_calls(&path, &calls).unwrap();
        let rows = read_calls(&path).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].0, "chr1");
        assert_eq!(rows[0].4, 100);
        assert!((rows[0].5 + 12.3456).abs() < 1e-9);
    }
}
