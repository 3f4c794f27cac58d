//! File-level front end behind the `pmba` binary.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags or parameters,
//! wrong helper count), 2 for data errors (unreadable, inconsistent or
//! corrupt shards, failed verification).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cluster::{Cluster, ClusterError, HelperPolicy};
use crate::encoder::Encoder;
use crate::params::{CodeParams, ParamsError, MIN_DEFAULT_MODULUS};
use crate::reconstructor::{ReconstructError, ReconstructionSession};
use crate::repairer::{repair_symbols_raw, RepairError, RepairSession};
use crate::shardfile::{shard_file_name, write_atomic, Manifest, ShardFile, ShardFileError, ShardHeader, MANIFEST_NAME};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Shard(#[from] ShardFileError),
    #[error("reconstruction failed: {0}")]
    Reconstruct(#[from] ReconstructError),
    #[error("repair failed: {0}")]
    Repair(#[from] RepairError),
    #[error("simulation failed: {0}")]
    Cluster(#[from] ClusterError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

impl From<ParamsError> for CliError {
    fn from(e: ParamsError) -> Self {
        CliError::Usage(format!("invalid parameters: {e}"))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Shard(ShardFileError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Derives parameters for a byte payload: one byte per symbol needs
/// `q >= 257`, and symbols are stored in two bytes.
pub fn byte_params(k: usize, delta: usize, n: usize, q: Option<u64>) -> Result<CodeParams, CliError> {
    if let Some(q) = q {
        if q < MIN_DEFAULT_MODULUS {
            return Err(CliError::Usage(format!(
                "q = {q} is too small for byte payloads; need q >= {MIN_DEFAULT_MODULUS}"
            )));
        }
        if q > u16::MAX as u64 {
            return Err(CliError::Usage(format!("q = {q} does not fit in 2-byte symbols; need q < 65536")));
        }
    }
    let params = CodeParams::derive(k, delta, n, q)?;
    if params.q() > u16::MAX as u32 {
        return Err(CliError::Usage(format!("derived q = {} does not fit in 2-byte symbols", params.q())));
    }
    Ok(params)
}

fn collision_warning(params: &CodeParams) -> Option<String> {
    let pairs = params.lambda_collisions();
    if pairs.is_empty() {
        return None;
    }
    let list: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}/{b}")).collect();
    Some(format!(
        "warning: nodes {} have equal e^(k-1) under q = {}; some {}-node subsets cannot reconstruct",
        list.join(" "),
        params.q(),
        params.k()
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodeSummary {
    pub shard_paths: Vec<PathBuf>,
    pub manifest_path: PathBuf,
    pub stripe_count: u64,
    pub original_length: u64,
    pub warning: Option<String>,
}

/// Splits `input` into `n` shard files `shard_NNN.pmba` plus `manifest.txt`
/// inside `output_dir`.
pub fn cmd_encode(input: &Path, output_dir: &Path, k: usize, delta: usize, n: usize, q: Option<u64>) -> Result<EncodeSummary, CliError> {
    let params = byte_params(k, delta, n, q)?;
    let bytes = fs::read(input).map_err(|e| io_error(input, e))?;
    fs::create_dir_all(output_dir).map_err(|e| io_error(output_dir, e))?;

    let f = params.file_symbols();
    let stripe_count = bytes.len().div_ceil(f);
    let mut source: Vec<u32> = bytes.iter().map(|&b| b as u32).collect();
    source.resize(stripe_count * f, 0);
    let payloads = encode_payloads(&params, &source);

    let mut manifest = Manifest {
        file_name: input
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        length: bytes.len() as u64,
        q: params.q(),
        n,
        k,
        delta,
        shards: Vec::with_capacity(n),
    };
    let mut shard_paths = Vec::with_capacity(n);
    for (j, payload) in payloads.into_iter().enumerate() {
        let shard = ShardFile {
            header: ShardHeader::for_params(&params, j + 1, stripe_count as u64, bytes.len() as u64)?,
            payload,
        };
        let name = shard_file_name(j + 1);
        let path = output_dir.join(&name);
        shard.write(&path)?;
        manifest.shards.push((j + 1, name, shard.checksum()));
        shard_paths.push(path);
    }
    let manifest_path = output_dir.join(MANIFEST_NAME);
    write_atomic(&manifest_path, manifest.render().as_bytes())?;
    Ok(EncodeSummary {
        shard_paths,
        manifest_path,
        stripe_count: stripe_count as u64,
        original_length: bytes.len() as u64,
        warning: collision_warning(&params),
    })
}

/// One payload per node: stripe after stripe of `alpha` symbols.
fn encode_payloads(params: &CodeParams, source: &[u32]) -> Vec<Vec<u32>> {
    let encoder = Encoder::new(params);
    let stripes: Vec<Vec<Vec<u32>>> = source
        .par_chunks(params.file_symbols())
        .map(|s| encoder.encode_stripe_raw(s))
        .collect();
    (0..params.n())
        .map(|j| stripes.iter().flat_map(|s| s[j].iter().copied()).collect())
        .collect()
}

/// Reads shard files, requiring consistent headers and distinct nodes.
/// Returns them sorted by node index.
fn load_consistent(paths: &[PathBuf]) -> Result<Vec<ShardFile>, CliError> {
    let mut shards = Vec::with_capacity(paths.len());
    for path in paths {
        let shard = ShardFile::read(path)?;
        shards.push((path, shard));
    }
    if let Some((first_path, first)) = shards.first() {
        for (path, s) in &shards[1..] {
            if !s.header.same_code(&first.header) {
                return Err(CliError::Data(format!(
                    "header mismatch: {} and {} describe different encodings",
                    first_path.display(),
                    path.display()
                )));
            }
        }
    }
    shards.sort_by_key(|(_, s)| s.header.node_index);
    for w in shards.windows(2) {
        if w[0].1.header.node_index == w[1].1.header.node_index {
            return Err(CliError::Data(format!(
                "node {} supplied twice ({} and {})",
                w[0].1.header.node_index,
                w[0].0.display(),
                w[1].0.display()
            )));
        }
    }
    Ok(shards.into_iter().map(|(_, s)| s).collect())
}

fn stripe_rows(shards: &[&ShardFile], alpha: usize, stripe: usize) -> Vec<Vec<u32>> {
    shards
        .iter()
        .map(|s| s.payload[stripe * alpha..(stripe + 1) * alpha].to_vec())
        .collect()
}

/// Decodes every stripe from exactly `k` shards (sorted by node index).
fn decode_symbols(params: &CodeParams, shards: &[&ShardFile], stripe_count: usize) -> Result<Vec<u32>, CliError> {
    let nodes: Vec<usize> = shards.iter().map(|s| s.header.node_index as usize).collect();
    let session = ReconstructionSession::new(params, &nodes)?;
    let alpha = params.alpha();
    let stripes: Vec<Vec<u32>> = (0..stripe_count)
        .into_par_iter()
        .map(|s| session.reconstruct_raw(&stripe_rows(shards, alpha, s)))
        .collect::<Result<_, _>>()?;
    Ok(stripes.concat())
}

/// Rebuilds the original file from at least `k` shards. Uses the
/// lowest-indexed `k` unless `nodes` names the ones to use. Returns the
/// number of bytes written.
pub fn cmd_reconstruct(shard_paths: &[PathBuf], output: &Path, nodes: Option<&[usize]>) -> Result<u64, CliError> {
    let shards = load_consistent(shard_paths)?;
    let first = shards
        .first()
        .ok_or_else(|| CliError::Usage("no shard files given".into()))?;
    let params = first.header.params()?;
    let k = params.k();
    if shards.len() < k {
        return Err(CliError::Data(format!(
            "need at least k = {k} shards, got {} (short by {})",
            shards.len(),
            k - shards.len()
        )));
    }
    let chosen: Vec<&ShardFile> = match nodes {
        None => shards.iter().take(k).collect(),
        Some(list) => {
            let mut list = list.to_vec();
            list.sort_unstable();
            list.dedup();
            if list.len() != k {
                return Err(CliError::Usage(format!("--nodes must name exactly k = {k} distinct nodes")));
            }
            list.iter()
                .map(|&j| {
                    shards
                        .iter()
                        .find(|s| s.header.node_index as usize == j)
                        .ok_or_else(|| CliError::Usage(format!("--nodes names node {j}, but no shard for it was given")))
                })
                .collect::<Result<_, _>>()?
        }
    };
    let header = &first.header;
    let symbols = decode_symbols(&params, &chosen, header.stripe_count as usize)?;
    let len = header.original_length as usize;
    if len > symbols.len() {
        return Err(CliError::Data(format!(
            "original length {len} exceeds the {} decoded symbols",
            symbols.len()
        )));
    }
    let bytes: Vec<u8> = symbols[..len]
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            u8::try_from(v).map_err(|_| CliError::Data(format!("decoded symbol {v} at offset {i} is not a byte; shards are corrupt")))
        })
        .collect::<Result<_, _>>()?;
    write_atomic(output, &bytes)?;
    Ok(len as u64)
}

/// Regenerates the shard of node `failed` from `d` helper shard files and
/// writes it to `output`.
pub fn cmd_repair(failed: usize, helper_paths: &[PathBuf], output: &Path) -> Result<ShardFile, CliError> {
    let helpers = load_consistent(helper_paths)?;
    let first = helpers
        .first()
        .ok_or_else(|| CliError::Usage("no helper shard files given".into()))?;
    let params = first.header.params()?;
    let d = helpers.len();
    if !params.is_helper_count(d) {
        return Err(CliError::Usage(format!(
            "{d} helper shards given; the helper count must be one of D = {:?}",
            params.helper_counts()
        )));
    }
    if failed == 0 || failed > params.n() {
        return Err(CliError::Usage(format!("failed node {failed} out of range 1..={}", params.n())));
    }
    if helpers.iter().any(|h| h.header.node_index as usize == failed) {
        return Err(CliError::Usage(format!("node {failed} cannot help repair itself")));
    }
    let helper_nodes: Vec<usize> = helpers.iter().map(|h| h.header.node_index as usize).collect();
    let session = RepairSession::new(&params, failed, &helper_nodes)?;
    let alpha = params.alpha();
    let stripes = first.header.stripe_count as usize;
    let repaired: Vec<Vec<u32>> = (0..stripes)
        .into_par_iter()
        .map(|s| {
            let upsilon: Vec<Vec<u32>> = helpers
                .iter()
                .map(|h| repair_symbols_raw(&params, &h.payload[s * alpha..(s + 1) * alpha], failed, d))
                .collect();
            session.repair_raw(&upsilon)
        })
        .collect();
    let shard = ShardFile {
        header: ShardHeader {
            node_index: failed as u32,
            ..first.header.clone()
        },
        payload: repaired.concat(),
    };
    shard.write(output)?;
    Ok(shard)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub lines: Vec<String>,
    pub ok: bool,
}

/// Checks header consistency, manifest checksums (if a manifest is given)
/// and, with more than `k` shards, that every shard agrees with the codeword
/// decoded from the lowest-indexed `k`.
pub fn cmd_verify(shard_paths: &[PathBuf], manifest: Option<&Path>) -> Result<VerifyReport, CliError> {
    let shards = load_consistent(shard_paths)?;
    let first = shards
        .first()
        .ok_or_else(|| CliError::Usage("no shard files given".into()))?;
    let params = first.header.params()?;
    let mut lines = vec![format!(
        "headers: ok ({} shards, n={} k={} delta={} q={}, {} stripes, {} bytes)",
        shards.len(),
        params.n(),
        params.k(),
        params.delta(),
        params.q(),
        first.header.stripe_count,
        first.header.original_length
    )];
    let mut ok = true;

    if let Some(path) = manifest {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let m = Manifest::parse(&text)?;
        let h = &first.header;
        if (m.length, m.q, m.n, m.k, m.delta)
            != (h.original_length, h.q as u32, h.n as usize, h.k as usize, h.delta as usize)
        {
            ok = false;
            lines.push("manifest: code parameters or length differ from shard headers".into());
        }
        for s in &shards {
            let j = s.header.node_index as usize;
            let actual = s.checksum();
            match m.checksum_for(j) {
                Some(expected) if expected == actual => lines.push(format!("checksum node {j}: ok ({actual:08x})")),
                Some(expected) => {
                    ok = false;
                    lines.push(format!("checksum node {j}: MISMATCH (manifest {expected:08x}, payload {actual:08x})"));
                }
                None => {
                    ok = false;
                    lines.push(format!("checksum node {j}: missing from manifest"));
                }
            }
        }
    }

    let k = params.k();
    if shards.len() > k {
        let readers: Vec<&ShardFile> = shards.iter().take(k).collect();
        let stripes = first.header.stripe_count as usize;
        match decode_symbols(&params, &readers, stripes) {
            Ok(symbols) => {
                let expected = encode_payloads(&params, &symbols);
                for s in &shards[k..] {
                    let j = s.header.node_index as usize;
                    if expected[j - 1] == s.payload {
                        lines.push(format!("codeword node {j}: ok"));
                    } else {
                        ok = false;
                        lines.push(format!("codeword node {j}: MISMATCH with nodes {:?}", readers.iter().map(|r| r.header.node_index).collect::<Vec<_>>()));
                    }
                }
            }
            Err(e) => {
                ok = false;
                lines.push(format!("codeword: cannot decode from lowest {k} shards: {e}"));
            }
        }
    } else {
        lines.push(format!("codeword: not checked (needs more than k = {k} shards)"));
    }
    lines.push(if ok { "verify: ok".into() } else { "verify: FAILED".into() });
    Ok(VerifyReport { lines, ok })
}

/// Parameter report; `compare` adds the subpacketization comparison.
pub fn cmd_params(k: usize, delta: usize, n: usize, q: Option<u64>, compare: bool) -> Result<String, CliError> {
    Ok(CodeParams::derive(k, delta, n, q)?.report(compare))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateOptions {
    pub stripes: usize,
    pub seed: u64,
    pub policy: HelperPolicy,
    /// Nodes failed together, then repaired in the same order.
    pub fail: Vec<usize>,
    /// Random single-node fail/repair rounds run when `fail` is empty.
    pub rounds: usize,
}

/// Drives the cluster simulator and returns the traffic ledger as CSV.
/// Every repair is followed by a full read that must return the stored data.
pub fn cmd_simulate(params: &CodeParams, opts: &SimulateOptions) -> Result<String, CliError> {
    if let HelperPolicy::Fixed(d) = opts.policy {
        if !params.is_helper_count(d) {
            return Err(CliError::Usage(format!(
                "policy fixed:{d}: the helper count must be one of D = {:?}",
                params.helper_counts()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let field = params.field();
    let source: Vec<_> = (0..opts.stripes * params.file_symbols())
        .map(|_| field.element(rng.random_range(0..params.q() as u64)))
        .collect();
    let mut cluster = Cluster::new(params);
    cluster.store(&source)?;
    let check = |c: &Cluster| -> Result<(), CliError> {
        if c.read_all()? != source {
            return Err(CliError::Data("read after repair returned different data".into()));
        }
        Ok(())
    };
    if opts.fail.is_empty() {
        for _ in 0..opts.rounds {
            let f = rng.random_range(1..=params.n());
            cluster.fail_node(f)?;
            cluster.run_repair(f, opts.policy, rng.random())?;
            check(&cluster)?;
        }
    } else {
        for &f in &opts.fail {
            cluster.fail_node(f)?;
        }
        for &f in &opts.fail {
            cluster.run_repair(f, opts.policy, rng.random())?;
            check(&cluster)?;
        }
    }
    Ok(cluster.ledger_csv())
}

#[derive(Debug, Parser)]
#[command(name = "pmba", version, about = "Regenerating-code file sharding with bandwidth-adaptive repair")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CodeArgs {
    /// Nodes needed to reconstruct.
    #[arg(long)]
    pub k: usize,
    /// Number of supported helper counts.
    #[arg(long)]
    pub delta: usize,
    /// Total number of nodes.
    #[arg(long)]
    pub n: usize,
    /// Prime field modulus; chosen automatically when omitted.
    #[arg(long)]
    pub q: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a file into n shard files plus a manifest.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        code: CodeArgs,
    },
    /// Rebuild the original file from at least k shard files.
    Reconstruct {
        #[arg(long)]
        output: PathBuf,
        /// Exactly k node indices to decode from (default: lowest k given).
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<usize>>,
        #[arg(required = true)]
        shards: Vec<PathBuf>,
    },
    /// Regenerate the shard of a failed node from d helper shard files.
    Repair {
        #[arg(long)]
        failed: usize,
        #[arg(long)]
        output: PathBuf,
        #[arg(required = true)]
        helpers: Vec<PathBuf>,
    },
    /// Check shard headers, checksums and codeword consistency.
    Verify {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(required = true)]
        shards: Vec<PathBuf>,
    },
    /// Inspect code parameters.
    Params {
        #[command(subcommand)]
        action: ParamsAction,
    },
    /// Run the cluster simulator and print the repair traffic ledger as CSV.
    Simulate {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value_t = 4)]
        stripes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// max-d, min-d or fixed:<d>.
        #[arg(long, default_value = "max-d")]
        policy: HelperPolicy,
        /// Nodes to fail together before repairing them in order.
        #[arg(long, value_delimiter = ',')]
        fail: Vec<usize>,
        /// Random single-node fail/repair rounds (used when --fail is absent).
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ParamsAction {
    /// Print every derived parameter.
    Show {
        #[command(flatten)]
        code: CodeArgs,
        /// Also compare subpacketization against the z^n alternative.
        #[arg(long)]
        compare: bool,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode { input, out_dir, code } => {
            let s = cmd_encode(&input, &out_dir, code.k, code.delta, code.n, code.q)?;
            if let Some(w) = &s.warning {
                eprintln!("{w}");
            }
            println!(
                "encoded {} bytes into {} stripes across {} shards in {}",
                s.original_length,
                s.stripe_count,
                s.shard_paths.len(),
                out_dir.display()
            );
        }
        Command::Reconstruct { output, nodes, shards } => {
            let len = cmd_reconstruct(&shards, &output, nodes.as_deref())?;
            println!("wrote {len} bytes to {}", output.display());
        }
        Command::Repair { failed, output, helpers } => {
            cmd_repair(failed, &helpers, &output)?;
            println!("repaired node {failed} from {} helpers into {}", helpers.len(), output.display());
        }
        Command::Verify { manifest, shards } => {
            let report = cmd_verify(&shards, manifest.as_deref())?;
            for line in &report.lines {
                println!("{line}");
            }
            if !report.ok {
                return Err(CliError::Data("verification failed".into()));
            }
        }
        Command::Params {
            action: ParamsAction::Show { code, compare },
        } => print!("{}", cmd_params(code.k, code.delta, code.n, code.q, compare)?),
        Command::Simulate {
            code,
            stripes,
            seed,
            policy,
            fail,
            rounds,
            output,
        } => {
            let params = CodeParams::derive(code.k, code.delta, code.n, code.q)?;
            if let Some(w) = collision_warning(&params) {
                eprintln!("{w}");
            }
            let csv = cmd_simulate(
                &params,
                &SimulateOptions {
                    stripes,
                    seed,
                    policy,
                    fail,
                    rounds,
                },
            )?;
            match output {
                Some(path) => write_atomic(&path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
