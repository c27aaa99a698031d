#include <doctest.h>

#include <set>

#include "support.hpp"
#include "xma/errors.hpp"
#include "xma/ingest.hpp"

using namespace xma;
using test::TempDir;
namespace fs = std::filesystem;

namespace {

const LabelSchema& fhm() { return test::shipped_config().schema("fhm"); }
const LabelSchema& mhc_raw() { return test::shipped_config().schema("mhc_raw"); }

Dataset mini_memes() {
  return load_dataset(test::data_dir() / "memes.mft", fhm(), MediaKind::Meme);
}
Dataset mini_videos() {
  return load_dataset(test::data_dir() / "videos.mft", mhc_raw(), MediaKind::Video);
}

struct Scratch {
  TempDir dir{"ingest"};
  Scratch() { save_png(test::gradient_image(4, 4), dir / "a.png"); }
  Dataset load(const std::string& lines, MediaKind kind = MediaKind::Meme,
               const LabelSchema& schema = fhm()) {
    test::write_text(dir / "m.mft", lines);
    return load_dataset(dir / "m.mft", schema, kind);
  }
};

}  // namespace

TEST_CASE("mini corpus loads with absolute media paths") {
  auto memes = mini_memes();
  CHECK(memes.dataset_id == "memes");
  CHECK(memes.size() == 40);
  for (const auto& m : memes.items) {
    CHECK(m.image.is_absolute());
    CHECK(fs::exists(m.image));
  }
  auto videos = mini_videos();
  CHECK(videos.size() == 20);
  for (const auto& v : videos.items) {
    CHECK(v.frame_count == static_cast<int>(v.frames.size()));
    CHECK(std::is_sorted(v.frames.begin(), v.frames.end()));
    CHECK(v.duration_s.has_value());
  }
  CHECK(memes.at("meme_001").item_id == "meme_001");
  CHECK_THROWS_AS(memes.at("nope"), IntegrityError);
}

TEST_CASE("manifest errors name the problem") {
  Scratch s;
  CHECK_NOTHROW(s.load(R"({"id":"x","image":"a.png","text":"t","label":"hateful"})" "\n"));
  CHECK_THROWS_AS(s.load(R"({"id":"x","image":"missing.png","label":"hateful"})" "\n"), ValidationError);
  CHECK_THROWS_AS(s.load(R"({"id":"x","image":"a.png","label":"spam"})" "\n"), SchemaError);
  CHECK_THROWS_AS(s.load(R"({"image":"a.png","label":"hateful"})" "\n"), ValidationError);
  CHECK_THROWS_AS(s.load(R"({"id":"x","image":"a.png","label":"hateful"})" "\n"
                         R"({"id":"x","image":"a.png","label":"hateful"})" "\n"),
                  IntegrityError);
  CHECK_THROWS_AS(s.load(R"({"id":"x","image":"a.png","label":"hateful","duration_s":3})" "\n"),
                  ValidationError);
  CHECK_THROWS_AS(s.load("{not json}\n"), ParseError);
  try {
    s.load(R"({"id":"x","image":"a.png","label":"hateful"})" "\n{broken\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(load_dataset(s.dir / "absent.mft", fhm(), MediaKind::Meme), ValidationError);
}

TEST_CASE("video manifests need duration and exactly one frame source") {
  Scratch s;
  fs::create_directories(s.dir / "f");
  save_png(test::gradient_image(4, 4), s.dir / "f" / "frame_0001.png");
  save_png(test::gradient_image(4, 4), s.dir / "f" / "frame_0000.png");
  auto ok = s.load(R"({"id":"v","frames_dir":"f","duration_s":5,"label":"normal"})" "\n",
                   MediaKind::Video, mhc_raw());
  REQUIRE(ok.items[0].frames.size() == 2);
  CHECK(ok.items[0].frames[0].filename() == "frame_0000.png");
  CHECK_THROWS_AS(s.load(R"({"id":"v","frames_dir":"f","label":"normal"})" "\n",
                         MediaKind::Video, mhc_raw()),
                  ValidationError);
  CHECK_THROWS_AS(s.load(R"({"id":"v","frames_dir":"f","duration_s":5,"frame_count":3,"label":"normal"})" "\n",
                         MediaKind::Video, mhc_raw()),
                  ValidationError);
  test::write_text(s.dir / "clip.mp4", "not really a video");
  CHECK_THROWS_AS(s.load(R"({"id":"v","video":"clip.mp4","duration_s":5,"label":"normal"})" "\n",
                         MediaKind::Video, mhc_raw()),
                  ValidationError);
  auto container = s.load(R"({"id":"v","video":"clip.mp4","frame_count":9,"duration_s":5,"label":"normal"})" "\n",
                          MediaKind::Video, mhc_raw());
  CHECK(container.items[0].frame_count == 9);
  CHECK_THROWS_AS(s.load(R"({"id":"v","video":"clip.mp4","frames_dir":"f","frame_count":2,"duration_s":5,"label":"normal"})" "\n",
                         MediaKind::Video, mhc_raw()),
                  ValidationError);
}

TEST_CASE("save and load round-trip") {
  TempDir dir("roundtrip");
  auto memes = mini_memes();
  save_dataset(memes, dir / "copy.mft");
  auto back = load_dataset(dir / "copy.mft", fhm(), MediaKind::Meme, "memes");
  CHECK(back == memes);

  auto videos = mini_videos();
  save_dataset(videos, dir / "sub" / "videos.mft");
  auto vback = load_dataset(dir / "sub" / "videos.mft", mhc_raw(), MediaKind::Video);
  CHECK(vback == videos);
}

TEST_CASE("split properties") {
  auto ds = mini_memes();
  for (std::uint64_t seed : {0u, 1u, 7u, 99u}) {
    for (double f : {0.8, 0.5, 0.33}) {
      auto [train, test] = split_dataset(ds, SplitSpec{f, seed});
      const auto expect = static_cast<std::size_t>(std::floor(f * 40 + 0.5));
      CHECK(train.size() == expect);
      CHECK(train.size() + test.size() == ds.size());
      std::set<std::string> ids;
      for (const auto& i : train.items) {
        ids.insert(i.item_id);
        CHECK(i.split == Split::Train);
      }
      for (const auto& i : test.items) {
        CHECK(ids.insert(i.item_id).second);
        CHECK(i.split == Split::Test);
      }
      CHECK(ids.size() == ds.size());
      auto position = [&](const std::string& id) {
        for (std::size_t k = 0; k < ds.items.size(); ++k) {
          if (ds.items[k].item_id == id) return k;
        }
        return ds.items.size();
      };
      for (std::size_t k = 1; k < train.items.size(); ++k) {
        CHECK(position(train.items[k - 1].item_id) < position(train.items[k].item_id));
      }
      auto again = split_dataset(ds, SplitSpec{f, seed});
      CHECK(again.first == train);
      CHECK(again.second == test);
    }
  }
  auto a = split_dataset(ds, SplitSpec{0.8, 1}).first;
  auto b = split_dataset(ds, SplitSpec{0.8, 2}).first;
  CHECK_FALSE(a == b);
  CHECK(a.dataset_id == "memes_train");
  CHECK_THROWS_AS(split_dataset(ds, SplitSpec{1.0, 0}), ValidationError);
}

TEST_CASE("sampling is without replacement and seeded") {
  auto ds = mini_memes();
  auto s1 = sample_items(ds, 30, 5);
  auto s2 = sample_items(ds, 30, 5);
  CHECK(s1 == s2);
  std::set<std::string> ids;
  for (const auto& i : s1.items) ids.insert(i.item_id);
  CHECK(ids.size() == 30);
  CHECK(sample_items(ds, 40, 1).size() == 40);
  CHECK(sample_items(ds, 0, 1).size() == 0);
  CHECK_THROWS_AS(sample_items(ds, 41, 1), BoundsError);
  CHECK_FALSE(sample_items(ds, 30, 6) == s1);
}

TEST_CASE("sample inclusion is close to uniform") {
  auto ds = mini_memes();
  std::map<std::string, int> hits;
  const int rounds = 2000;
  for (int seed = 0; seed < rounds; ++seed) {
    for (const auto& i : sample_items(ds, 10, seed).items) ++hits[i.item_id];
  }
  // Expected 500 hits per item; five standard deviations is about 97.
  for (const auto& [id, n] : hits) CHECK(std::abs(n - 500) < 100);
  CHECK(hits.size() == 40);
}

TEST_CASE("remap keeps the source label and counts") {
  const auto& cfg = test::shipped_config();
  auto videos = mini_videos();
  auto remapped = remap_dataset(videos, cfg.mapping("mhc_raw", "mhc"), cfg.task("mhc"));
  auto before = label_counts(videos);
  auto after = label_counts(remapped);
  CHECK(after["offensive"] == before["hateful"] + before["offensive"]);
  CHECK(after["non-offensive"] == before["normal"]);
  for (std::size_t i = 0; i < videos.items.size(); ++i) {
    CHECK(remapped.items[i].source_label == videos.items[i].original_label);
  }
  auto labels = binary_labels(remapped, cfg.task("mhc"));
  CHECK(labels.size() == 20);
  CHECK_THROWS_AS(binary_labels(videos, cfg.task("mhc")), SchemaError);
  CHECK_THROWS_AS(remap_dataset(videos, cfg.mapping("fhm", "mhc"), cfg.task("mhc")), MappingError);
}
