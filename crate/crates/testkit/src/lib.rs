//! Fixture builders shared by the malnet test suites.
//!
//! Nothing here links against the parsers under test: manifests and DEX
//! files are encoded by hand, archives are written by the `zip` crate and
//! certificates come from the committed files under `fixtures/` (see
//! `fixtures/gen_fixtures.py`).

pub mod apk;
pub mod axml;
pub mod dex;

pub use apk::{ApkBuilder, DigestAlg, Method};

pub mod files {
    pub const TINY_APK: &[u8] = include_bytes!("../fixtures/tiny.apk");
    pub const CERT_VALID: &[u8] = include_bytes!("../fixtures/cert_valid.der");
    /// Self-issued, valid 2020-01-01T00:00:00Z .. 2050-01-01T00:00:00Z.
    pub const SIGBLOCK_VALID: &[u8] = include_bytes!("../fixtures/sigblock_valid.der");
    /// Self-issued, valid 2001-01-01 .. 2002-01-01.
    pub const SIGBLOCK_EXPIRED: &[u8] = include_bytes!("../fixtures/sigblock_expired.der");
    /// Issued by a separate CA, valid 2021-03-15T12:30:00Z .. 2031-03-15T12:30:00Z.
    pub const SIGBLOCK_CA_ISSUED: &[u8] = include_bytes!("../fixtures/sigblock_ca_issued.der");
    /// Certificates-only bundle holding the CA-issued and the debug
    /// certificate; DER set ordering puts the debug certificate first.
    pub const CERTS_ONLY: &[u8] = include_bytes!("../fixtures/certs_only.p7b");
    pub const JAR_SIGNED_SHA1: &[u8] = include_bytes!("../fixtures/jar_signed_sha1.apk");
    pub const JAR_TAMPERED_SHA1: &[u8] = include_bytes!("../fixtures/jar_tampered_sha1.apk");
}

/// Expected extraction results for a built fixture.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub permissions: Vec<&'static str>,
    pub intent_actions: Vec<&'static str>,
    pub api_categories: Vec<&'static str>,
    pub cert_invalid: bool,
    pub apk_in_assets: bool,
}

pub struct Fixture {
    pub builder: ApkBuilder,
    pub truth: GroundTruth,
}

impl Fixture {
    pub fn bytes(&self) -> Vec<u8> {
        self.builder.build()
    }
}

pub const MALICIOUS_PERMISSIONS: &[&str] = &[
    "android.permission.SEND_SMS",
    "android.permission.READ_CONTACTS",
    "android.permission.INTERNET",
    "android.permission.RECEIVE_BOOT_COMPLETED",
];

pub const MALICIOUS_ACTIONS: &[&str] = &[
    "android.intent.action.BOOT_COMPLETED",
    "android.provider.Telephony.SMS_RECEIVED",
];

/// Signed multidex app with SMS/contacts permissions, a boot receiver,
/// telephony/crypto calls in classes.dex, dynamic loading and reflection in
/// classes2.dex, and a nested APK under assets/.
pub fn malicious_style() -> Fixture {
    let manifest = axml::encode(&axml::manifest(
        "com.example.flashlight",
        MALICIOUS_PERMISSIONS,
        &[MALICIOUS_ACTIONS],
    ));
    let dex1 = dex::DexBuilder::new()
        .method("Landroid/telephony/TelephonyManager;", "getDeviceId")
        .method("Ljavax/crypto/Cipher;", "getInstance")
        .method("Lcom/example/flashlight/MainActivity;", "onCreate")
        .build();
    let dex2 = dex::DexBuilder::new()
        .method("Ldalvik/system/DexClassLoader;", "<init>")
        .method("Ljava/lang/reflect/Method;", "invoke")
        .build();
    let builder = ApkBuilder::new()
        .add("AndroidManifest.xml", manifest, Method::Deflate)
        .add("classes.dex", dex1, Method::Stored)
        .add("classes2.dex", dex2, Method::Deflate)
        .add("resources.arsc", vec![0u8; 64], Method::Stored)
        .add("assets/payload.apk", apk::nested_payload(), Method::Stored)
        .sign_v1(files::SIGBLOCK_VALID, "CERT.EC", DigestAlg::Sha256);
    Fixture {
        builder,
        truth: GroundTruth {
            permissions: MALICIOUS_PERMISSIONS.to_vec(),
            intent_actions: {
                let mut v = MALICIOUS_ACTIONS.to_vec();
                v.push("android.intent.action.MAIN");
                v
            },
            api_categories: vec!["telephony", "crypto", "dexloader", "reflection"],
            cert_invalid: false,
            apk_in_assets: true,
        },
    }
}

/// The malicious-style fixture with one byte of classes.dex flipped after
/// signing. The byte sits in the DEX header's SHA-1 field, so the file still
/// parses and only the manifest digest changes.
pub fn malicious_tampered() -> Fixture {
    let mut f = malicious_style();
    f.builder = f.builder.with_flipped_byte("classes.dex", 0x10);
    f.truth.cert_invalid = true;
    f
}

/// Signed app without permissions, receivers, flagged APIs or asset payloads.
pub fn benign() -> Fixture {
    let manifest = axml::encode(&axml::Element::new("manifest")
        .plain("package", "com.example.notes")
        .child(axml::Element::new("application").android("label", "Notes")));
    let dex = dex::DexBuilder::new()
        .method("Lcom/example/notes/NoteList;", "render")
        .method("Ljava/lang/StringBuilder;", "append")
        .build();
    let builder = ApkBuilder::new()
        .add("AndroidManifest.xml", manifest, Method::Deflate)
        .add("classes.dex", dex, Method::Deflate)
        .add("assets/fonts/regular.ttf", vec![0x00, 0x01, 0x00, 0x00, 0x00], Method::Deflate)
        .sign_v1(files::SIGBLOCK_VALID, "CERT.EC", DigestAlg::Sha256);
    Fixture {
        builder,
        truth: GroundTruth::default(),
    }
}

pub mod mutate;
pub mod oracle;
