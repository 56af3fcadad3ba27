#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fsv/errors.hpp"
#include "fsv/fewshot.hpp"
#include "oracles.hpp"

using namespace fsv;
namespace fs = std::filesystem;

namespace {

DatasetManifest corpus(std::size_t speakers, std::size_t per_speaker, double duration = 4.0) {
  DatasetManifest m;
  m.base_dir = "/data";
  for (std::size_t s = 0; s < speakers; ++s) {
    for (std::size_t u = 0; u < per_speaker; ++u) {
      const std::string spk = "s" + std::to_string(s);
      m.entries.push_back({spk, spk + "/u" + std::to_string(u) + ".wav", duration});
    }
  }
  return m;
}

// Every path decodes to a distinct 4 s ramp; records what was requested.
struct FakeLoader {
  std::vector<fs::path>* requested;
  audio::WavClip operator()(const fs::path& p) const {
    requested->push_back(p);
    audio::WavClip c;
    c.samples.resize(64000);
    const double base = static_cast<double>(std::hash<std::string>{}(p.string()) % 1000) / 1e4;
    for (std::size_t i = 0; i < c.samples.size(); ++i) c.samples[i] = base + 1e-6 * static_cast<double>(i);
    return c;
  }
};

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("fsv_fewshot_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Tensor unit(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  for (double& x : v) x /= std::sqrt(s);
  return Tensor::vector(v);
}

}  // namespace

TEST(Manifest, RoundTripRebasesRelativePaths) {
  const fs::path dir = temp_dir("manifest");
  DatasetManifest m;
  m.base_dir = dir / "wav";
  m.entries = {{"a", "a/1.wav", 4.5}, {"b", "b/1.wav", 0.1 + 0.2}};
  fs::create_directories(dir / "out");
  write_manifest(dir / "out" / "m.csv", m);
  const DatasetManifest back = read_manifest(dir / "out" / "m.csv");
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[1].duration_s, 0.1 + 0.2);
  EXPECT_EQ(fs::weakly_canonical(back.resolve(back.entries[0].wav_path)),
            fs::weakly_canonical(dir / "wav" / "a" / "1.wav"));
  EXPECT_EQ(back.speakers(), (std::vector<std::string>{"a", "b"}));
}

TEST(Manifest, Errors) {
  const fs::path dir = temp_dir("manifest_err");
  EXPECT_THROW(read_manifest(dir / "missing.csv"), IoError);
  std::ofstream(dir / "bad.csv") << "speaker,path\n";
  EXPECT_THROW(read_manifest(dir / "bad.csv"), FormatError);
  std::ofstream(dir / "dup.csv") << "speaker_id,wav_path,duration_s\na,x.wav,1\nb,x.wav,1\n";
  EXPECT_THROW(read_manifest(dir / "dup.csv"), FormatError);
  std::ofstream(dir / "neg.csv") << "speaker_id,wav_path,duration_s\na,x.wav,-1\n";
  EXPECT_THROW(read_manifest(dir / "neg.csv"), FormatError);
}

TEST(Split, TenSpeakersGiveSevenAndThree) {
  std::mt19937_64 rng(1);
  const auto [train, eval] = split_dataset(corpus(10, 3), 0.7, rng);
  EXPECT_EQ(train.speakers().size(), 7u);
  EXPECT_EQ(eval.speakers().size(), 3u);
  EXPECT_EQ(train.entries.size(), 21u);
}

TEST(Split, SidesAreDisjointAndCoverEverySpeaker) {
  oracle::Gen gen(2);
  for (int trial = 0; trial < 50; ++trial) {
    const DatasetManifest m = corpus(gen.index(2, 12), gen.index(1, 4));
    std::mt19937_64 rng(gen.engine()());
    const auto [train, eval] = split_dataset(m, gen.uniform(0.05, 0.95), rng);
    const auto a = train.speakers(), b = eval.speakers();
    ASSERT_FALSE(a.empty());
    ASSERT_FALSE(b.empty());
    std::set<std::string> all(a.begin(), a.end());
    for (const auto& s : b) ASSERT_TRUE(all.insert(s).second) << s << " on both sides";
    ASSERT_EQ(all.size(), m.speakers().size());
    ASSERT_EQ(train.entries.size() + eval.entries.size(), m.entries.size());
  }
}

TEST(Split, SameSeedSameSplit) {
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(split_dataset(corpus(10, 2), 0.7, a).first.speakers(),
            split_dataset(corpus(10, 2), 0.7, b).first.speakers());
}

TEST(Split, OneSpeakerIsContractError) {
  std::mt19937_64 rng(0);
  EXPECT_THROW(split_dataset(corpus(1, 5), 0.7, rng), ContractError);
}

TEST(Support, FiveShotsUseFiveDistinctUtterances) {
  std::vector<fs::path> requested;
  std::mt19937_64 rng(3);
  const SupportSet s = sample_support(corpus(2, 8), "s1", 5, 3.0, rng, FakeLoader{&requested});
  EXPECT_EQ(s.clips.size(), 5u);
  EXPECT_EQ(requested.size(), 5u);
  EXPECT_EQ(std::set<std::string>(s.sources.begin(), s.sources.end()).size(), 5u);
  for (const auto& src : s.sources) EXPECT_TRUE(src.starts_with("s1/"));
  for (const auto& c : s.clips) EXPECT_EQ(c.samples.size(), 48000u);
}

TEST(Support, TooFewUtterancesIsInsufficientData) {
  std::vector<fs::path> requested;
  std::mt19937_64 rng(4);
  EXPECT_THROW(sample_support(corpus(2, 4), "s0", 5, 3.0, rng, FakeLoader{&requested}),
               InsufficientDataError);
  // Utterances shorter than the clip do not count.
  EXPECT_THROW(sample_support(corpus(2, 8, 2.0), "s0", 5, 3.0, rng, FakeLoader{&requested}),
               InsufficientDataError);
}

TEST(Support, SeededDeterminism) {
  std::vector<fs::path> r1, r2;
  std::mt19937_64 a(5), b(5);
  const SupportSet x = sample_support(corpus(3, 10), "s2", 5, 3.0, a, FakeLoader{&r1});
  const SupportSet y = sample_support(corpus(3, 10), "s2", 5, 3.0, b, FakeLoader{&r2});
  EXPECT_EQ(x.sources, y.sources);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(x.clips[i].samples, y.clips[i].samples);
}

TEST(Trials, ThreeSpeakersGiveBalancedLists) {
  std::mt19937_64 rng(6);
  const auto trials = build_trials(corpus(3, 12), TrialConfig{}, rng);
  std::size_t genuine = 0, impostor = 0;
  for (const auto& t : trials) {
    (t.genuine ? genuine : impostor)++;
    const std::string probe_spk = t.probe_path.substr(0, t.probe_path.find('/'));
    EXPECT_EQ(probe_spk, t.probe_speaker);
    EXPECT_EQ(t.genuine, probe_spk == t.enroll_speaker);
  }
  EXPECT_EQ(genuine, 30u);
  EXPECT_EQ(impostor, 30u);
}

TEST(Trials, ExcludedPathsNeverBecomeProbes) {
  oracle::Gen gen(7);
  for (int trial = 0; trial < 30; ++trial) {
    const DatasetManifest m = corpus(gen.index(2, 5), gen.index(3, 8));
    std::set<std::string> excluded;
    for (const auto& spk : m.speakers()) excluded.insert(m.entries_of(spk).front()->wav_path);
    std::mt19937_64 rng(gen.engine()());
    for (const auto& t : build_trials(m, TrialConfig{}, rng, excluded)) {
      ASSERT_FALSE(excluded.count(t.probe_path)) << t.probe_path;
    }
  }
}

TEST(Trials, DeterministicAndCyclesShortPools) {
  std::mt19937_64 a(8), b(8);
  const auto x = build_trials(corpus(2, 3), TrialConfig{}, a);
  const auto y = build_trials(corpus(2, 3), TrialConfig{}, b);
  ASSERT_EQ(x.size(), 40u);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].probe_path, y[i].probe_path);
  // 10 genuine draws from a pool of 3 use every utterance.
  std::map<std::string, int> uses;
  for (std::size_t i = 0; i < 10; ++i) uses[x[i].probe_path]++;
  EXPECT_EQ(uses.size(), 3u);
}

TEST(Trials, OneSpeakerIsContractError) {
  std::mt19937_64 rng(0);
  EXPECT_THROW(build_trials(corpus(1, 5), TrialConfig{}, rng), ContractError);
}

TEST(Trials, FileRoundTrip) {
  const fs::path dir = temp_dir("trials");
  std::mt19937_64 rng(9);
  const auto trials = build_trials(corpus(3, 5), TrialConfig{}, rng);
  write_trials(dir / "t.txt", trials);
  const auto back = read_trials(dir / "t.txt");
  ASSERT_EQ(back.size(), trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    EXPECT_EQ(back[i].enroll_speaker, trials[i].enroll_speaker);
    EXPECT_EQ(back[i].probe_path, trials[i].probe_path);
    EXPECT_EQ(back[i].genuine, trials[i].genuine);
  }
  EXPECT_THROW(read_trials(dir / "none.txt"), IoError);
  std::ofstream(dir / "bad.txt") << "2 a b\n";
  EXPECT_THROW(read_trials(dir / "bad.txt"), FormatError);
}

TEST(Enroll, CentroidMatchesOracle) {
  oracle::Gen gen(10);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = gen.index(1, 6), dim = gen.index(2, 10);
    std::vector<Tensor> embs;
    std::vector<double> sum(dim, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<double> v(dim);
      for (double& x : v) x = gen.normal();
      embs.push_back(unit(v));
      for (std::size_t j = 0; j < dim; ++j) sum[j] += embs.back()[j];
    }
    const Tensor want = unit(sum);
    const Tensor got = enroll_embeddings(embs);
    ASSERT_LT(oracle::max_abs_diff(got, want), 1e-12);
  }
}

TEST(Enroll, IdenticalShotsReturnThatEmbedding) {
  const Tensor e = unit({0.3, -0.1, 0.7});
  const std::vector<Tensor> embs(5, e);
  EXPECT_EQ(enroll_embeddings(embs), e);
}

TEST(Enroll, Errors) {
  EXPECT_THROW(enroll_embeddings(std::vector<Tensor>{}), ContractError);
  const std::vector<Tensor> opposite{Tensor::vector({1, 0}), Tensor::vector({-1, 0})};
  EXPECT_THROW(enroll_embeddings(opposite), NumericError);
}

TEST(Score, NegatedDistance) {
  EXPECT_EQ(verification_score(Tensor::vector({1, 0}), Tensor::vector({1, 0})), 0.0);
  EXPECT_FALSE(std::signbit(verification_score(Tensor::vector({1, 0}), Tensor::vector({1, 0}))));
  EXPECT_DOUBLE_EQ(verification_score(Tensor::vector({1, 0}), Tensor::vector({0, 1})),
                   -std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(verification_score(Tensor::vector({1, 0}), Tensor::vector({-1, 0})), -2.0);
  EXPECT_THROW(verification_score(Tensor::vector({2, 0}), Tensor::vector({1, 0})), ContractError);
}
