use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qbe_hough::detector::DetectConfig;
use qbe_hough::distmat::Metric;
use qbe_hough::edge::CannyParams;
use qbe_hough::hough::HoughParams;
use qbe_hough::Exec;

#[derive(Parser, Debug)]
#[command(name = "qbe-hough", version, about = "Query-by-example spoken term detection with Hough lines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert a WAV file into a QBF1 feature file of MFCCs.
    Extract {
        input: PathBuf,
        output: PathBuf,
    },
    /// Detect a query in one reference.
    Search {
        query: PathBuf,
        reference: PathBuf,
        #[command(flatten)]
        detect: DetectArgs,
        /// Write the distance image as PGM.
        #[arg(long, value_name = "PATH")]
        emit_image: Option<PathBuf>,
        /// Write the binary edge map as PGM.
        #[arg(long, value_name = "PATH")]
        emit_edges: Option<PathBuf>,
    },
    /// Detect a query in every .wav or .qbf file of a directory.
    Scan {
        query: PathBuf,
        refs: PathBuf,
        #[command(flatten)]
        detect: DetectArgs,
    },
    /// Score a trial manifest and report MTWV.
    Eval {
        manifest: PathBuf,
        #[command(flatten)]
        detect: DetectArgs,
        /// Write the TWV curve as CSV.
        #[arg(long, value_name = "PATH")]
        curve: Option<PathBuf>,
        /// Score trials with the DTW baseline instead of the line detector.
        #[arg(long)]
        dtw: bool,
    },
    /// Segmental DTW baseline on one pair.
    BaselineDtw {
        query: PathBuf,
        reference: PathBuf,
        #[command(flatten)]
        detect: DetectArgs,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Dispatch on file extension.
    Auto,
    /// Treat every input as WAV and extract MFCCs.
    Mfcc,
    /// Treat every input as a QBF1 file.
    Qbf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricArg {
    Canberra,
    Cosine,
    Euclidean,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Canberra => Metric::Canberra,
            MetricArg::Cosine => Metric::Cosine,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DetectArgs {
    #[arg(long, value_enum, default_value = "canberra")]
    pub metric: MetricArg,
    /// Hough distance resolution, pixels.
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Hough angle resolution, degrees.
    #[arg(long, default_value_t = 1.0)]
    pub theta_deg: f64,
    #[arg(long, default_value_t = 30)]
    pub vote_threshold: u32,
    #[arg(long, default_value_t = 200.0)]
    pub max_line_gap: f64,
    /// Accept lines longer than query frames minus this margin.
    #[arg(long, default_value_t = 50.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 15.0)]
    pub angle_min: f64,
    #[arg(long, default_value_t = 80.0)]
    pub angle_max: f64,
    /// Canny hysteresis thresholds.
    #[arg(long, default_value_t = 80.0)]
    pub canny_low: f64,
    #[arg(long, default_value_t = 120.0)]
    pub canny_high: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dtw_threshold: f64,
    #[arg(long, value_enum, default_value = "auto")]
    pub features: FeatureMode,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
    /// Write the result document here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

impl DetectArgs {
    pub fn config(&self) -> DetectConfig {
        DetectConfig {
            metric: self.metric.into(),
            canny: CannyParams {
                t_lower: self.canny_low,
                t_upper: self.canny_high,
                ..CannyParams::default()
            },
            hough: HoughParams {
                rho_resolution: self.rho,
                theta_resolution: self.theta_deg.to_radians(),
                vote_threshold: self.vote_threshold,
                max_line_gap: self.max_line_gap,
                margin_px: self.margin,
                angle_min_deg: self.angle_min,
                angle_max_deg: self.angle_max,
            },
            dtw_threshold: self.dtw_threshold,
            exec: Exec::Parallel,
            ..DetectConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library_defaults() {
        let cli = Cli::parse_from(["qbe-hough", "search", "q.qbf", "r.qbf"]);
        let Command::Search { detect, .. } = cli.command else {
            panic!("parsed the wrong subcommand")
        };
        let cfg = detect.config();
        let lib = DetectConfig::default();
        assert_eq!(cfg.hough, lib.hough);
        assert_eq!(cfg.hough.theta_resolution.to_bits(), (std::f64::consts::PI / 180.0).to_bits());
        assert_eq!(cfg.canny, lib.canny);
        assert_eq!(cfg.metric, lib.metric);
        assert_eq!(cfg.dtw_threshold, lib.dtw_threshold);
        assert_eq!(detect.jobs, 1);
    }

    #[test]
    fn jobs_zero_is_rejected() {
        assert!(Cli::try_parse_from(["qbe-hough", "scan", "q", "d", "--jobs", "0"]).is_err());
    }
}
