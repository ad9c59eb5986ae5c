use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use swmnn::lexicon::WORD_VOCAB_CAPACITY;
use swmnn::model::SwmConfig;
use swmnn::ngram::NGramModel;
use swmnn::pipeline::{self, Bundle, Example};
use swmnn::trainer::TrainConfig;
use swmnn_ffi::*;

fn ex(s: &str, y: usize) -> Example {
    (s.split_whitespace().map(String::from).collect(), y)
}

fn saved_model(dir: &Path) -> Bundle {
    let lex = pipeline::parse_lexicon("cat\tANIMAL\nfern\tPLANT | BRAND\nwilts\tact_wilt\n", "lex").unwrap();
    let data = [ex("the fern wilts", 1), ex("the cat wilts", 0)];
    let mut template = SwmConfig::new(1, 1).with_dims(4);
    template.dropout = 0.0;
    let tc = TrainConfig {
        epochs: 3,
        validate_every: 1,
        ..TrainConfig::default()
    };
    let (bundle, _) = pipeline::fit(&data, &data, lex, &template, WORD_VOCAB_CAPACITY, &tc).unwrap();
    bundle.save(dir).unwrap();
    bundle
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(swmnn_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn model_handle_scores_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = saved_model(dir.path());
    let path = c(dir.path().to_str().unwrap());
    let mut model: *mut SwmnnModel = ptr::null_mut();
    unsafe {
        assert_eq!(swmnn_model_load(path.as_ptr(), &mut model), SwmnnStatus::Ok);
        assert!(!model.is_null());
        for s in ["the fern wilts", "the cat wilts", "an unseen  sentence "] {
            let mut p = f64::NAN;
            assert_eq!(swmnn_model_score(model, c(s).as_ptr(), &mut p), SwmnnStatus::Ok);
            let toks: Vec<&str> = s.split_whitespace().collect();
            let expected = bundle.probabilities(&toks).unwrap();
            assert_eq!(p, expected[1]);
            let mut label = -1;
            assert_eq!(swmnn_model_classify(model, c(s).as_ptr(), &mut label), SwmnnStatus::Ok);
            assert_eq!(label as usize, swmnn::model::argmax(&expected));
        }
        assert_eq!(last_error(), "");
        swmnn_model_free(model);
        swmnn_model_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported_with_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    saved_model(dir.path());
    let mut model: *mut SwmnnModel = ptr::null_mut();
    unsafe {
        let missing = c("/nonexistent/model");
        assert_eq!(swmnn_model_load(missing.as_ptr(), &mut model), SwmnnStatus::Io);
        assert!(model.is_null());
        assert!(last_error().contains("/nonexistent/model"), "{}", last_error());

        assert_eq!(swmnn_model_load(ptr::null(), &mut model), SwmnnStatus::NullPointer);
        assert_eq!(swmnn_model_load(missing.as_ptr(), ptr::null_mut()), SwmnnStatus::NullPointer);

        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(
            swmnn_model_load(bad.as_ptr() as *const c_char, &mut model),
            SwmnnStatus::InvalidUtf8
        );

        std::fs::write(dir.path().join(pipeline::WORDS_FILE), "<pad>\n<unk>\nthe\n").unwrap();
        let path = c(dir.path().to_str().unwrap());
        assert_eq!(swmnn_model_load(path.as_ptr(), &mut model), SwmnnStatus::BadModel);
        assert!(last_error().contains("word_embedding"), "{}", last_error());

        let mut p = 0.0;
        assert_eq!(swmnn_model_score(ptr::null(), c("a").as_ptr(), &mut p), SwmnnStatus::NullPointer);
    }
}

#[test]
fn empty_sentences_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    saved_model(dir.path());
    let path = c(dir.path().to_str().unwrap());
    let mut model: *mut SwmnnModel = ptr::null_mut();
    unsafe {
        assert_eq!(swmnn_model_load(path.as_ptr(), &mut model), SwmnnStatus::Ok);
        let mut p = 0.0;
        assert_eq!(swmnn_model_score(model, c("   ").as_ptr(), &mut p), SwmnnStatus::InvalidInput);
        assert_eq!(swmnn_model_score(model, c("the fern").as_ptr(), ptr::null_mut()), SwmnnStatus::NullPointer);
        swmnn_model_free(model);
    }
}

#[test]
fn ngram_handle_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let corpus: Vec<Vec<&str>> = vec![vec!["a", "b", "c"], vec!["a", "c", "b"], vec!["b", "c"]];
    let lm = NGramModel::train(&corpus, 3).unwrap();
    let file = dir.path().join("kn.json");
    lm.save(&file).unwrap();
    let mut handle: *mut SwmnnNgram = ptr::null_mut();
    unsafe {
        assert_eq!(swmnn_ngram_load(c(file.to_str().unwrap()).as_ptr(), &mut handle), SwmnnStatus::Ok);
        let mut lp = 0.0;
        assert_eq!(swmnn_ngram_logprob(handle, c("a b zzz").as_ptr(), &mut lp), SwmnnStatus::Ok);
        assert_eq!(lp, lm.logprob(&["a", "b", "zzz"]).unwrap());
        swmnn_ngram_free(handle);

        std::fs::write(&file, "{ not json").unwrap();
        assert_eq!(swmnn_ngram_load(c(file.to_str().unwrap()).as_ptr(), &mut handle), SwmnnStatus::BadModel);
        assert!(handle.is_null());
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(swmnn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/swmnn.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "swmnn_last_error_message",
        "swmnn_version",
        "swmnn_model_load",
        "swmnn_model_free",
        "swmnn_model_score",
        "swmnn_model_classify",
        "swmnn_ngram_load",
        "swmnn_ngram_free",
        "swmnn_ngram_logprob",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(text.contains("typedef struct SwmnnModel SwmnnModel;"));

    let src = tempfile::Builder::new().suffix(".c").tempfile().unwrap();
    std::fs::write(
        src.path(),
        "#include \"swmnn.h\"\n\
         int main(void) {\n\
           SwmnnModel *m = NULL; double p = 0; int32_t y = 0;\n\
           if (swmnn_model_load(\"d\", &m) != SWMNN_STATUS_OK) return 1;\n\
           swmnn_model_score(m, \"a b\", &p); swmnn_model_classify(m, \"a\", &y);\n\
           swmnn_model_free(m);\n\
           return swmnn_last_error_message()[0] == 0 && swmnn_version() != NULL;\n\
         }\n",
    )
    .unwrap();
    let status = match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(src.path())
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler available; skipping compile check");
            return;
        }
    };
    assert!(status.success(), "header does not compile as C");
}
