#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "cgfenet/container.hpp"
#include "cgfenet/oracle.hpp"

using namespace cgfenet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("cgfenet_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("record round trip") {
  const fs::path dir = temp_dir("record");
  std::vector<NamedArray> arrays;
  arrays.push_back(NamedArray::make_f32("a", {2, 3}, {1, 2, 3, 4, 5, 6}));
  arrays.push_back(NamedArray::make_i32("b", {4}, {7, -8, 9, 10}));
  write_record(dir / "r.rec", arrays);

  const auto back = read_record(dir / "r.rec");
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "a");
  CHECK(back[0].shape == std::vector<std::int64_t>{2, 3});
  CHECK(back[0].f32 == arrays[0].f32);
  CHECK(back[1].i32 == arrays[1].i32);
}

TEST_CASE("record error paths are distinct") {
  const fs::path dir = temp_dir("record_err");

  {
    std::ofstream out(dir / "bad_dtype.rec", std::ios::binary);
    out << R"([{"name":"x","dtype":"f64","shape":[1]}])" << "\n";
    out.write("\0\0\0\0\0\0\0\0", 8);
  }
  CHECK_THROWS_WITH(read_record(dir / "bad_dtype.rec"),
                    Catch::Matchers::ContainsSubstring("unsupported dtype"));

  {
    std::ofstream out(dir / "trunc.rec", std::ios::binary);
    out << R"([{"name":"x","dtype":"f32","shape":[8]}])" << "\n";
    out.write("\0\0\0\0", 4);  // 4 of 32 payload bytes
  }
  CHECK_THROWS_WITH(read_record(dir / "trunc.rec"),
                    Catch::Matchers::ContainsSubstring("truncated payload"));

  {
    std::ofstream out(dir / "garbled.rec", std::ios::binary);
    out << "not json at all\n";
  }
  CHECK_THROWS_WITH(read_record(dir / "garbled.rec"),
                    Catch::Matchers::ContainsSubstring("malformed header"));

  CHECK_THROWS_AS(read_record(dir / "absent.rec"), Error);
}

TEST_CASE("dataset write/read round trip is lossless") {
  const OracleParams op;
  const Dataset ds = generate_dataset(5, 3, 4, 11, op);
  const fs::path dir = temp_dir("dataset");
  write_dataset(ds, dir);
  const Dataset back = read_dataset(dir);

  REQUIRE(back.meshes.size() == ds.meshes.size());
  CHECK(back.t_grid == ds.t_grid);
  for (std::size_t i = 0; i < ds.meshes.size(); ++i) {
    const auto& a = ds.meshes[i];
    const auto& b = back.meshes[i];
    CHECK(a.id == b.id);
    CHECK(a.split == b.split);
    CHECK(a.v_grid == b.v_grid);
    CHECK(a.mesh.labels == b.mesh.labels);
    CHECK(a.mesh.edges == b.mesh.edges);
    CHECK(a.mesh.endo_faces == b.mesh.endo_faces);
    CHECK((a.x_unload_star - b.x_unload_star).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((a.p_star - b.p_star).cwiseAbs().maxCoeff() == 0.0f);
    for (std::size_t v = 0; v < a.x_load_star.size(); ++v)
      CHECK((a.x_load_star[v] - b.x_load_star[v]).cwiseAbs().maxCoeff() ==
            0.0f);
    // nodes pass through f32 storage
    CHECK((a.mesh.nodes.cast<float>() - b.mesh.nodes.cast<float>())
              .cwiseAbs()
              .maxCoeff() == 0.0f);
    CHECK(a.mesh.gen_params.subdivision == b.mesh.gen_params.subdivision);
    CHECK(a.mesh.gen_params.inner_radius_mm == b.mesh.gen_params.inner_radius_mm);
  }
}

TEST_CASE("same seed produces byte-identical dataset files") {
  const OracleParams op;
  const fs::path d1 = temp_dir("bytes1");
  const fs::path d2 = temp_dir("bytes2");
  write_dataset(generate_dataset(5, 3, 4, 99, op), d1);
  write_dataset(generate_dataset(5, 3, 4, 99, op), d2);
  for (const auto& entry : fs::directory_iterator(d1)) {
    const auto name = entry.path().filename();
    CHECK(slurp(entry.path()) == slurp(d2 / name));
  }
}

TEST_CASE("missing manifest is reported") {
  const fs::path dir = temp_dir("nomanifest");
  CHECK_THROWS_WITH(read_dataset(dir),
                    Catch::Matchers::ContainsSubstring("manifest not found"));
}
