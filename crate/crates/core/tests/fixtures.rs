use std::collections::BTreeSet;
use std::io::{Cursor, Read};

use chrono::{DateTime, TimeZone, Utc};
use malnet_core::apk::{open_apk, CompressionMethod};
use malnet_core::axml::parse_axml;
use malnet_core::cert::{self, parse_certificate_validity, CertPolicy};
use malnet_core::dex::{default_rules, detect_api_categories, parse_dex, scan_all_dex, MethodRef};
use malnet_core::features::{
    default_schema, extract, extract_with, open_archive, vectorize, ExtractOptions, FeatureSet, Stage,
    DEFAULT_SCHEMA,
};
use malnet_testkit::axml::{self as enc, Element};
use malnet_testkit::dex::DexBuilder;
use malnet_testkit::{files, ApkBuilder, DigestAlg, Fixture, Method};

fn scan_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap()
}

fn strings(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Expected bits computed straight from the schema text and ground truth.
fn expected_bits(f: &Fixture) -> Vec<bool> {
    let t = &f.truth;
    let perms = strings(&t.permissions);
    DEFAULT_SCHEMA
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (kind, arg) = l.split_once(' ').unwrap_or((l, ""));
            match kind {
                "perm" => perms.contains(arg),
                "permpair" => {
                    let (a, b) = arg.split_once('+').unwrap();
                    perms.contains(a) && perms.contains(b)
                }
                "intent" => t.intent_actions.contains(&arg),
                "api" => t.api_categories.contains(&arg),
                "cert" => t.cert_invalid,
                "asset" => t.apk_in_assets,
                other => panic!("unexpected schema line kind {other}"),
            }
        })
        .collect()
}

fn check_fixture(f: &Fixture) {
    let archive = open_archive(f.bytes()).unwrap();
    let x = extract_with(&archive, scan_time(), &ExtractOptions::default()).unwrap();
    let feats = &x.features;
    assert_eq!(feats.permissions, strings(&f.truth.permissions));
    assert_eq!(feats.intent_actions, strings(&f.truth.intent_actions));
    let cats: BTreeSet<String> = feats.api_categories.iter().map(|c| c.to_string()).collect();
    assert_eq!(cats, strings(&f.truth.api_categories));
    assert_eq!(feats.cert_invalid, f.truth.cert_invalid);
    assert_eq!(feats.apk_in_assets, f.truth.apk_in_assets);

    let schema = default_schema();
    let v = vectorize(feats, &schema, "fixture");
    assert_eq!(v.bits, expected_bits(f));
    assert_eq!(v.bits[schema.span(FeatureSet::Fs4)], [f.truth.cert_invalid]);
    assert_eq!(v.bits[schema.span(FeatureSet::Fs5)], [f.truth.apk_in_assets]);
}

#[test]
fn malicious_style_matches_ground_truth() {
    check_fixture(&malnet_testkit::malicious_style());
}

#[test]
fn tampered_fixture_flips_certificate_bit() {
    check_fixture(&malnet_testkit::malicious_tampered());
    let a = open_archive(malnet_testkit::malicious_tampered().bytes()).unwrap();
    let r = cert::check_entry_digests(&a).unwrap();
    assert_eq!(r.mismatched, vec!["classes.dex".to_string()]);
}

#[test]
fn benign_fixture_is_all_zero() {
    let f = malnet_testkit::benign();
    check_fixture(&f);
    let a = open_archive(f.bytes()).unwrap();
    let v = vectorize(&extract(&a, scan_time()).unwrap(), &default_schema(), "b");
    assert!(v.bits.iter().all(|&b| !b));
}

#[test]
fn package_name_is_reported() {
    let a = open_archive(malnet_testkit::malicious_style().bytes()).unwrap();
    let x = extract_with(&a, scan_time(), &ExtractOptions::default()).unwrap();
    assert_eq!(x.package_name.as_deref(), Some("com.example.flashlight"));
    assert_eq!(x.assets.by_extension, vec!["assets/payload.apk".to_string()]);
}

#[test]
fn container_agrees_with_zip_reader() {
    let bytes = malnet_testkit::malicious_style().bytes();
    let archive = open_apk(bytes.clone()).unwrap();
    let mut oracle = zip_oracle(&bytes);
    assert_eq!(archive.entries().len(), oracle.len());
    assert_eq!(archive.directory_records(), oracle.len());
    for (name, data) in oracle.drain(..) {
        assert_eq!(archive.read_entry(&name).unwrap(), data, "{name}");
    }
    let methods: Vec<CompressionMethod> = archive.entries().iter().map(|e| e.method).collect();
    assert!(methods.contains(&CompressionMethod::Stored));
    assert!(methods.contains(&CompressionMethod::Deflate));
}

/// Entries in directory order, read with an independent ZIP implementation.
fn zip_oracle(bytes: &[u8]) -> Vec<(String, Vec<u8>)> {
    let mut z = zip::ZipArchive::new(Cursor::new(bytes)).unwrap();
    (0..z.len())
        .map(|i| {
            let mut f = z.by_index(i).unwrap();
            let mut data = Vec::new();
            f.read_to_end(&mut data).unwrap();
            (f.name().to_string(), data)
        })
        .collect()
}

#[test]
fn committed_tiny_apk_opens() {
    let a = open_apk(files::TINY_APK.to_vec()).unwrap();
    for name in a.names().map(str::to_string).collect::<Vec<_>>() {
        a.read_entry(&name).unwrap();
    }
}

#[test]
fn missing_entry_is_reported() {
    let a = open_apk(files::TINY_APK.to_vec()).unwrap();
    assert!(a.read_entry("no/such/entry").is_err());
}

#[test]
fn duplicate_names_resolve_last_wins() {
    let bytes = ApkBuilder::new()
        .add("a.txt", b"first".to_vec(), Method::Stored)
        .add("b.txt", b"other".to_vec(), Method::Deflate)
        .build();
    // rename b.txt to a.txt in both headers: same length, so offsets hold
    let mut raw = bytes.clone();
    let mut i = 0;
    while let Some(p) = find(&raw[i..], b"b.txt") {
        raw[i + p] = b'a';
        i += p + 1;
    }
    let a = open_apk(raw).unwrap();
    assert_eq!(a.directory_records(), 2);
    assert_eq!(a.entries().len(), 1);
    assert_eq!(a.read_entry("a.txt").unwrap(), b"other");
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

#[test]
fn axml_round_trip_from_independent_encoder() {
    let root = enc::manifest(
        "org.sample.app",
        &["android.permission.INTERNET", "android.permission.SEND_SMS"],
        &[&["android.intent.action.BOOT_COMPLETED"], &["android.intent.action.USER_PRESENT"]],
    );
    let info = parse_axml(&enc::encode(&root)).unwrap();
    assert_eq!(info.package_name, "org.sample.app");
    assert_eq!(
        info.permissions,
        strings(&["android.permission.INTERNET", "android.permission.SEND_SMS"])
    );
    assert_eq!(
        info.intent_actions,
        strings(&[
            "android.intent.action.MAIN",
            "android.intent.action.BOOT_COMPLETED",
            "android.intent.action.USER_PRESENT",
        ])
    );
}

#[test]
fn axml_layout_variants_parse_identically() {
    let root = enc::manifest("p.q", &["android.permission.READ_SMS"], &[&["android.intent.action.PHONE_STATE"]]);
    let base = parse_axml(&enc::encode(&root)).unwrap();
    for opts in [
        enc::AxmlOptions { utf8: true, ..Default::default() },
        enc::AxmlOptions { unknown_chunk: true, ..Default::default() },
        enc::AxmlOptions { strip_attr_names: true, ..Default::default() },
    ] {
        assert_eq!(parse_axml(&enc::encode_with(&root, opts)).unwrap(), base, "{opts:?}");
    }
}

#[test]
fn axml_without_permissions() {
    let root = Element::new("manifest").plain("package", "x.y");
    let info = parse_axml(&enc::encode(&root)).unwrap();
    assert!(info.permissions.is_empty());
    assert!(info.intent_actions.is_empty());
}

#[test]
fn dex_method_refs_match_builder() {
    let bytes = DexBuilder::new()
        .method("Ljava/net/URL;", "openConnection")
        .method("Ljava/lang/Runtime;", "exec")
        .extra_string("unused")
        .build();
    let s = parse_dex(&bytes).unwrap();
    assert_eq!(s.dex_count, 1);
    let refs: BTreeSet<MethodRef> = s.method_refs.into_iter().collect();
    let want: BTreeSet<MethodRef> = [
        MethodRef::new("Ljava/net/URL;", "openConnection"),
        MethodRef::new("Ljava/lang/Runtime;", "exec"),
    ]
    .into_iter()
    .collect();
    assert_eq!(refs, want);
    assert!(s.strings.contains(&"unused".to_string()));
}

#[test]
fn multidex_is_merged() {
    let a = open_apk(malnet_testkit::malicious_style().bytes()).unwrap();
    let s = scan_all_dex(&a).unwrap();
    assert_eq!(s.dex_count, 2);
    let cats: BTreeSet<String> = detect_api_categories(&s, &default_rules())
        .iter()
        .map(|c| c.to_string())
        .collect();
    assert_eq!(cats, strings(&["telephony", "crypto", "dexloader", "reflection"]));
}

#[test]
fn certificate_windows_match_fixture_notes() {
    let now = scan_time();
    let v = parse_certificate_validity(files::SIGBLOCK_VALID, now).unwrap();
    assert_eq!(v.not_before, Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap());
    assert_eq!(v.not_after, Utc.with_ymd_and_hms(2050, 1, 1, 0, 0, 0).unwrap());
    assert!(v.self_signed && !v.expired);

    let e = parse_certificate_validity(files::SIGBLOCK_EXPIRED, now).unwrap();
    assert!(e.expired);
    assert_eq!(e.not_after, Utc.with_ymd_and_hms(2002, 1, 1, 0, 0, 0).unwrap());

    let ca = parse_certificate_validity(files::SIGBLOCK_CA_ISSUED, now).unwrap();
    assert!(!ca.self_signed);
    assert_eq!(ca.not_before, Utc.with_ymd_and_hms(2021, 3, 15, 12, 30, 0).unwrap());

    let bundle = parse_certificate_validity(files::CERTS_ONLY, now).unwrap();
    assert_eq!(bundle.not_before, v.not_before);
    assert!(bundle.self_signed);

    let bare = parse_certificate_validity(files::CERT_VALID, now).unwrap();
    assert!(!bare.expired);
}

#[test]
fn validity_boundaries_are_inclusive() {
    let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    assert!(!parse_certificate_validity(files::SIGBLOCK_VALID, start).unwrap().expired);
    let before = start - chrono::Duration::seconds(1);
    assert!(parse_certificate_validity(files::SIGBLOCK_VALID, before).unwrap().expired);
}

#[test]
fn jar_signed_fixtures() {
    let ok = open_apk(files::JAR_SIGNED_SHA1.to_vec()).unwrap();
    assert!(cert::verify_entry_digests(&ok).unwrap());
    assert!(!cert::certificate_invalid(&ok, scan_time()));
    let bad = open_apk(files::JAR_TAMPERED_SHA1.to_vec()).unwrap();
    assert!(!cert::verify_entry_digests(&bad).unwrap());
    assert!(cert::certificate_invalid(&bad, scan_time()));
}

#[test]
fn unsigned_and_expired_count_as_invalid() {
    let unsigned = ApkBuilder::new()
        .add("AndroidManifest.xml", enc::encode(&Element::new("manifest")), Method::Deflate)
        .build();
    let a = open_apk(unsigned).unwrap();
    assert!(cert::certificate_invalid(&a, scan_time()));
    let lax = CertPolicy { require_signature: false, ..Default::default() };
    assert!(!cert::signature_report(&a, scan_time(), lax).verdict_invalid);

    let expired = ApkBuilder::new()
        .add("classes.dex", DexBuilder::new().build(), Method::Deflate)
        .sign_v1(files::SIGBLOCK_EXPIRED, "CERT.RSA", DigestAlg::Sha1)
        .build();
    let a = open_apk(expired).unwrap();
    let r = cert::signature_report(&a, scan_time(), CertPolicy::default());
    assert!(r.has_signature && r.digest_ok && r.verdict_invalid);
    let lax = CertPolicy { check_validity: false, ..Default::default() };
    assert!(!cert::signature_report(&a, scan_time(), lax).verdict_invalid);
}

#[test]
fn strict_and_lenient_extraction() {
    let broken = ApkBuilder::new()
        .add("AndroidManifest.xml", b"not axml".to_vec(), Method::Stored)
        .add("classes.dex", DexBuilder::new().method("Ljava/net/Socket;", "connect").build(), Method::Stored)
        .build();
    let a = open_archive(broken).unwrap();
    let err = extract(&a, scan_time()).unwrap_err();
    assert_eq!(err.stage, Stage::Manifest);
    let opts = ExtractOptions { lenient: true, ..Default::default() };
    let x = extract_with(&a, scan_time(), &opts).unwrap();
    assert!(x.features.permissions.is_empty());
    assert!(!x.warnings.is_empty());
    assert_eq!(x.features.api_categories.len(), 1);

    let no_dex = ApkBuilder::new()
        .add("AndroidManifest.xml", enc::encode(&Element::new("manifest")), Method::Deflate)
        .build();
    let a = open_archive(no_dex).unwrap();
    assert_eq!(extract(&a, scan_time()).unwrap_err().stage, Stage::Dex);

    assert_eq!(open_archive(b"PK nothing".to_vec()).unwrap_err().stage, Stage::Container);
}

#[test]
fn nested_jar_is_warned_not_counted() {
    let bytes = ApkBuilder::new()
        .add("AndroidManifest.xml", enc::encode(&Element::new("manifest")), Method::Deflate)
        .add("classes.dex", DexBuilder::new().build(), Method::Deflate)
        .add("assets/lib.jar", malnet_testkit::apk::nested_payload(), Method::Stored)
        .add("assets/blob.bin", malnet_testkit::apk::nested_payload(), Method::Deflate)
        .build();
    let a = open_archive(bytes).unwrap();
    let x = extract(&a, scan_time()).unwrap();
    assert!(x.apk_in_assets);
    let scan = malnet_core::apk::scan_assets(&a);
    assert_eq!(scan.by_magic, vec!["assets/blob.bin".to_string()]);
    assert_eq!(scan.warnings.len(), 1);
}
