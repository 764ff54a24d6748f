#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "convasr/corpus.hpp"

using namespace convasr;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("CONVASR_CLI");
  REQUIRE(p != nullptr);
  return p;
}

fs::path work_dir() {
  auto dir = fs::temp_directory_path() / "convasr_cli_tests";
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kSynthConfig = R"(
seed = 11
synth.n_conversations = 3
synth.utterances_per_conv = 3
synth.feature_dim = 4
synth.frames_per_token = 4
synth.word_vectors_dim = 5
)";

}  // namespace

TEST_CASE("synth command") {
  auto dir = work_dir();
  const auto cfg = dir / "synth.cfg";
  write_file(cfg, kSynthConfig);

  SECTION("same config twice is byte-identical") {
    const auto a = dir / "a.jsonl";
    const auto b = dir / "b.jsonl";
    REQUIRE(run("synth " + cfg.string() + " " + a.string()) == 0);
    REQUIRE(run("synth " + cfg.string() + " " + b.string()) == 0);
    REQUIRE(slurp(a) == slurp(b));
    REQUIRE(fs::exists(a.string() + ".manifest.json"));
  }
  SECTION("generated corpus round-trips through load_corpus") {
    const auto out = dir / "load.jsonl";
    REQUIRE(run("synth " + cfg.string() + " " + out.string()) == 0);
    auto corpus = load_corpus(out.string());
    REQUIRE(corpus.size() == 3);
    REQUIRE(corpus[0].utterances.size() == 3);
    REQUIRE(corpus_feature_dim(corpus) == 4);
  }
  SECTION("missing config file exits 2") {
    REQUIRE(run("synth /nonexistent.cfg " + (dir / "x.jsonl").string()) == 2);
  }
  SECTION("unknown config key exits 2") {
    const auto bad = dir / "bad.cfg";
    write_file(bad, "synth.n_conversatoins = 3\n");
    REQUIRE(run("synth " + bad.string() + " " + (dir / "y.jsonl").string()) == 2);
  }
  SECTION("missing positional arguments exit 2") {
    REQUIRE(run("synth") == 2);
  }
}

TEST_CASE("train, decode, score pipeline") {
  auto dir = work_dir();
  const auto synth_cfg = dir / "pipe_synth.cfg";
  write_file(synth_cfg, kSynthConfig);
  const auto corpus = dir / "pipe.jsonl";
  REQUIRE(run("synth " + synth_cfg.string() + " " + corpus.string()) == 0);

  const auto train_cfg = dir / "pipe_train.cfg";
  write_file(train_cfg, std::string(R"(
seed = 11
train.corpus = )") + corpus.string() +
                            R"(
train.epochs = 2
train.batch_size = 2
model.enc_width = 3
model.att_dim = 4
model.att_conv_channels = 2
model.att_conv_width = 3
model.dec_width = 6
model.emb_dim = 4
model.context_dim = 3
embeddings.word_dim = 4
train.checkpoint_out = )" + (dir / "pipe.ckpt").string() +
                            "\n");
  REQUIRE(run("train " + train_cfg.string()) == 0);
  REQUIRE(fs::exists(dir / "pipe.ckpt"));
  REQUIRE(fs::exists(dir / "pipe.ckpt.metrics.jsonl"));

  SECTION("train manifest echoes the effective lambda") {
    auto doc = nlohmann::json::parse(slurp(dir / "pipe.ckpt.manifest.json"));
    REQUIRE(doc.at("lambda").get<double>() == 0.2);
  }
  SECTION("decode with default flags then score") {
    const auto hyp = dir / "pipe.hyp.jsonl";
    REQUIRE(run("decode " + (dir / "pipe.ckpt").string() + " " + corpus.string() +
                " " + hyp.string()) == 0);
    REQUIRE(fs::exists(hyp));
    // default joint-search settings land in the manifest verbatim
    auto dec_manifest =
        nlohmann::json::parse(slurp(fs::path(hyp.string() + ".manifest.json")));
    REQUIRE(dec_manifest.at("beam").get<double>() == 10.0);
    REQUIRE(dec_manifest.at("gamma").get<double>() == 0.3);
    REQUIRE(dec_manifest.at("length_penalty").get<double>() == 0.5);
    // hypothesis count covers every utterance
    auto hyps_text = slurp(hyp);
    REQUIRE(std::count(hyps_text.begin(), hyps_text.end(), '\n') == 9);

    const auto report = dir / "pipe.report";
    REQUIRE(run("score " + corpus.string() + " " + hyp.string() + " " +
                report.string()) == 0);
    REQUIRE(fs::exists(dir / "pipe.report.txt"));
    auto doc = nlohmann::json::parse(slurp(dir / "pipe.report.json"));
    REQUIRE(doc.contains("corpus_wer"));
    REQUIRE(doc.at("utterances").size() == 9);
  }
  SECTION("decode determinism") {
    const auto h1 = dir / "d1.jsonl";
    const auto h2 = dir / "d2.jsonl";
    REQUIRE(run("decode " + (dir / "pipe.ckpt").string() + " " + corpus.string() +
                " " + h1.string() + " --beam 3") == 0);
    REQUIRE(run("decode " + (dir / "pipe.ckpt").string() + " " + corpus.string() +
                " " + h2.string() + " --beam 3") == 0);
    REQUIRE(slurp(h1) == slurp(h2));
  }
  SECTION("resume continues epoch numbering") {
    const auto resume_cfg = dir / "resume.cfg";
    write_file(resume_cfg, slurp(train_cfg) +
                               "train.resume = " + (dir / "pipe.ckpt").string() +
                               "\ntrain.checkpoint_out = " +
                               (dir / "resumed.ckpt").string() + "\n");
    REQUIRE(run("train " + resume_cfg.string()) == 0);
    auto metrics = slurp(dir / "resumed.ckpt.metrics.jsonl");
    // first line continues at epoch 2
    auto first = nlohmann::json::parse(metrics.substr(0, metrics.find('\n')));
    REQUIRE(first.at("epoch").get<int>() == 2);
  }
  SECTION("score rejects a hypothesis file with a missing utterance") {
    const auto hyp = dir / "short.hyp.jsonl";
    REQUIRE(run("decode " + (dir / "pipe.ckpt").string() + " " + corpus.string() +
                " " + hyp.string() + " --beam 1") == 0);
    // drop the last line
    auto text = slurp(hyp);
    auto pos = text.rfind('\n', text.size() - 2);
    write_file(hyp, text.substr(0, pos + 1));
    REQUIRE(run("score " + corpus.string() + " " + hyp.string() + " " +
                (dir / "bad.report").string()) == 3);
  }
}

TEST_CASE("pretrain command masks the encoder") {
  auto dir = work_dir();
  const auto synth_cfg = dir / "pre_synth.cfg";
  write_file(synth_cfg, kSynthConfig);
  const auto corpus = dir / "pre.jsonl";
  REQUIRE(run("synth " + synth_cfg.string() + " " + corpus.string()) == 0);

  // strip features to make a text-only corpus
  auto loaded = load_corpus(corpus.string());
  for (auto& conv : loaded) {
    for (auto& utt : conv.utterances) utt.features = FeatureMatrix{};
  }
  const auto text_corpus = dir / "pre_text.jsonl";
  save_corpus(loaded, text_corpus.string());

  const auto pre_cfg = dir / "pre.cfg";
  write_file(pre_cfg, std::string(R"(
seed = 11
model.feature_dim = 4
model.enc_width = 3
model.att_dim = 4
model.att_conv_channels = 2
model.att_conv_width = 3
model.dec_width = 6
model.emb_dim = 4
model.context_dim = 3
embeddings.word_dim = 4
pretrain.corpus = )") + text_corpus.string() +
                           R"(
pretrain.epochs = 1
pretrain.checkpoint_out = )" + (dir / "pre.ckpt").string() +
                           "\n");
  REQUIRE(run("pretrain " + pre_cfg.string()) == 0);
  REQUIRE(fs::exists(dir / "pre.ckpt"));

  // fine-tune from the pretrained checkpoint on the speech corpus
  const auto ft_cfg = dir / "ft.cfg";
  write_file(ft_cfg, std::string(R"(
seed = 11
train.corpus = )") + corpus.string() +
                         R"(
train.epochs = 1
model.enc_width = 3
model.att_dim = 4
model.att_conv_channels = 2
model.att_conv_width = 3
model.dec_width = 6
model.emb_dim = 4
model.context_dim = 3
embeddings.word_dim = 4
train.resume = )" + (dir / "pre.ckpt").string() +
                         R"(
train.checkpoint_out = )" + (dir / "ft.ckpt").string() +
                         "\n");
  REQUIRE(run("train " + ft_cfg.string()) == 0);
  REQUIRE(fs::exists(dir / "ft.ckpt"));
}
