use std::fmt;

use chrono::{DateTime, Utc};
use log::warn;
use thiserror::Error;

use super::AppFeatures;
use crate::apk::{self, ApkArchive, AssetScan};
use crate::axml::{self, ManifestInfo};
use crate::cert::{self, CertPolicy, SignatureReport};
use crate::dex::{self, ApiCategoryRule};

pub const MANIFEST_ENTRY: &str = "AndroidManifest.xml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Container,
    Manifest,
    Dex,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Container => "container",
            Stage::Manifest => "manifest",
            Stage::Dex => "dex",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{stage} stage: {message}")]
pub struct ExtractionError {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// Degrade failed manifest/dex stages to empty sets instead of failing.
    pub lenient: bool,
    pub cert_policy: CertPolicy,
    pub rules: Vec<ApiCategoryRule>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            lenient: false,
            cert_policy: CertPolicy::default(),
            rules: dex::default_rules(),
        }
    }
}

/// Features plus the intermediate reports they were derived from.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub features: AppFeatures,
    pub package_name: Option<String>,
    pub signature: SignatureReport,
    pub assets: AssetScan,
    pub warnings: Vec<String>,
}

fn degrade<T: Default>(
    r: Result<T, ExtractionError>,
    lenient: bool,
    warnings: &mut Vec<String>,
) -> Result<T, ExtractionError> {
    match r {
        Ok(v) => Ok(v),
        Err(e) if lenient => {
            warn!("{e}; continuing with empty features");
            warnings.push(e.to_string());
            Ok(T::default())
        }
        Err(e) => Err(e),
    }
}

pub fn extract_with(
    archive: &ApkArchive,
    now: DateTime<Utc>,
    opts: &ExtractOptions,
) -> Result<Extraction, ExtractionError> {
    let mut warnings: Vec<String> = archive.warnings().to_vec();

    let manifest = archive
        .read_entry(MANIFEST_ENTRY)
        .map_err(|e| ExtractionError {
            stage: Stage::Manifest,
            message: e.to_string(),
        })
        .and_then(|b| {
            axml::parse_axml(&b).map_err(|e| ExtractionError {
                stage: Stage::Manifest,
                message: e.to_string(),
            })
        });
    let manifest: ManifestInfo = degrade(manifest, opts.lenient, &mut warnings)?;

    let dex = dex::scan_all_dex(archive).map_err(|e| ExtractionError {
        stage: Stage::Dex,
        message: e.to_string(),
    });
    let dex = degrade(dex, opts.lenient, &mut warnings)?;

    let signature = cert::signature_report(archive, now, opts.cert_policy);
    let assets = apk::scan_assets(archive);
    warnings.extend(assets.warnings.iter().cloned());

    let features = AppFeatures {
        permission_pairs: axml::permission_pairs(&manifest),
        permissions: manifest.permissions,
        intent_actions: manifest.intent_actions,
        api_categories: dex::detect_api_categories(&dex, &opts.rules),
        cert_invalid: signature.verdict_invalid,
        apk_in_assets: assets.found(),
    };
    Ok(Extraction {
        features,
        package_name: (!manifest.package_name.is_empty()).then_some(manifest.package_name),
        signature,
        assets,
        warnings,
    })
}

/// Strict extraction with the default rule table and certificate policy.
pub fn extract(archive: &ApkArchive, now: DateTime<Utc>) -> Result<AppFeatures, ExtractionError> {
    extract_with(archive, now, &ExtractOptions::default()).map(|e| e.features)
}

/// Opens `bytes` as an archive, attributing failures to the container stage.
pub fn open_archive(bytes: Vec<u8>) -> Result<ApkArchive, ExtractionError> {
    apk::open_apk(bytes).map_err(|e| ExtractionError {
        stage: Stage::Container,
        message: e.to_string(),
    })
}
