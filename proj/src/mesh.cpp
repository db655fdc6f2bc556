#include "specdeform/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace specdeform {

namespace {

std::int64_t undirected_key(int a, int b, int nv) {
  const int lo = std::min(a, b), hi = std::max(a, b);
  return static_cast<std::int64_t>(lo) * nv + hi;
}

std::int64_t directed_key(int a, int b, int nv) {
  return static_cast<std::int64_t>(a) * nv + b;
}

std::string edge_str(int a, int b) {
  return "(" + std::to_string(a) + "," + std::to_string(b) + ")";
}

}  // namespace

double triangle_area(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Eigen::Vector2d e1 = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
  const Eigen::Vector2d e2 = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

double total_area(const Mesh& mesh) {
  double area = 0;
  for (int t = 0; t < mesh.num_triangles(); ++t) area += triangle_area(mesh, t);
  return area;
}

int euler_characteristic(const Mesh& mesh) {
  std::set<std::int64_t> edges;
  for (const auto& tri : mesh.triangles)
    for (int e = 0; e < 3; ++e)
      edges.insert(undirected_key(tri[e], tri[(e + 1) % 3], mesh.num_vertices()));
  return mesh.num_vertices() - static_cast<int>(edges.size()) + mesh.num_triangles();
}

Mesh generate_square(int n) {
  if (n < 1)
    throw ValidationError("mesh: square subdivision count must be >= 1, got " +
                          std::to_string(n));
  Mesh mesh;
  const double h = 1.0 / n;
  mesh.vertices.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      mesh.vertices.emplace_back(i * h, j * h);
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  mesh.triangles.reserve(2 * n * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int a = vid(i, j), b = vid(i + 1, j);
      const int c = vid(i + 1, j + 1), d = vid(i, j + 1);
      mesh.triangles.push_back({a, b, c});
      mesh.triangles.push_back({a, c, d});
    }
  mesh.boundary_edges.reserve(4 * n);
  for (int i = 0; i < n; ++i) mesh.boundary_edges.push_back({vid(i, 0), vid(i + 1, 0)});
  for (int j = 0; j < n; ++j) mesh.boundary_edges.push_back({vid(n, j), vid(n, j + 1)});
  for (int i = n; i > 0; --i) mesh.boundary_edges.push_back({vid(i, n), vid(i - 1, n)});
  for (int j = n; j > 0; --j) mesh.boundary_edges.push_back({vid(0, j), vid(0, j - 1)});
  return mesh;
}

Mesh generate_disk(int rings) {
  if (rings < 1)
    throw ValidationError("mesh: disk ring count must be >= 1, got " +
                          std::to_string(rings));
  const int R = rings;
  Mesh mesh;
  mesh.vertices.emplace_back(0.0, 0.0);
  auto ring_start = [](int r) { return 1 + 3 * r * (r - 1); };
  for (int r = 1; r <= R; ++r) {
    const double radius = static_cast<double>(r) / R;
    const int count = 6 * r;
    for (int k = 0; k < count; ++k) {
      const double angle = 2.0 * M_PI * k / count;
      mesh.vertices.emplace_back(radius * std::cos(angle), radius * std::sin(angle));
    }
  }
  // Center fan against ring 1.
  for (int s = 0; s < 6; ++s)
    mesh.triangles.push_back({0, ring_start(1) + s, ring_start(1) + (s + 1) % 6});
  // Annulus between rings r and r+1, built sector by sector so the
  // triangulation replicates exactly under 60-degree rotations.
  for (int r = 1; r < R; ++r) {
    const int inner_count = 6 * r, outer_count = 6 * (r + 1);
    for (int s = 0; s < 6; ++s) {
      auto inner = [&](int j) { return ring_start(r) + (s * r + j) % inner_count; };
      auto outer = [&](int j) {
        return ring_start(r + 1) + (s * (r + 1) + j) % outer_count;
      };
      int i = 0, o = 0;
      while (i < r || o < r + 1) {
        // Advance along whichever ring has the nearer next angle; the
        // comparison (o+1)/(r+1) <= (i+1)/r is exact in integers.
        if (o < r + 1 && (i == r || (o + 1) * r <= (i + 1) * (r + 1))) {
          mesh.triangles.push_back({outer(o), outer(o + 1), inner(i)});
          ++o;
        } else {
          mesh.triangles.push_back({inner(i + 1), inner(i), outer(o)});
          ++i;
        }
      }
    }
  }
  const int bstart = ring_start(R), bcount = 6 * R;
  for (int k = 0; k < bcount; ++k)
    mesh.boundary_edges.push_back({bstart + k, bstart + (k + 1) % bcount});
  return mesh;
}

void validate_mesh(const Mesh& mesh) {
  const int nv = mesh.num_vertices();
  for (int v = 0; v < nv; ++v)
    if (!mesh.vertices[v].allFinite())
      throw ValidationError("mesh: non-finite coordinate at vertex " + std::to_string(v));

  std::vector<char> referenced(nv, 0);
  std::map<std::int64_t, int> undirected;  // edge -> number of incident triangles
  std::set<std::int64_t> directed;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int e = 0; e < 3; ++e) {
      if (tri[e] < 0 || tri[e] >= nv)
        throw ValidationError("mesh: triangle " + std::to_string(t) +
                              " references vertex " + std::to_string(tri[e]) +
                              " out of range [0," + std::to_string(nv) + ")");
      referenced[tri[e]] = 1;
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw ValidationError("mesh: triangle " + std::to_string(t) + " has repeated vertices");
    if (triangle_area(mesh, t) <= 0)
      throw ValidationError("mesh: triangle " + std::to_string(t) +
                            " has non-positive area (clockwise or degenerate)");
    for (int e = 0; e < 3; ++e) {
      const int a = tri[e], b = tri[(e + 1) % 3];
      if (++undirected[undirected_key(a, b, nv)] > 2)
        throw ValidationError("mesh: edge " + edge_str(a, b) +
                              " is shared by more than two triangles");
      if (!directed.insert(directed_key(a, b, nv)).second)
        throw ValidationError("mesh: edge " + edge_str(a, b) +
                              " traversed twice in the same direction "
                              "(inconsistent triangle orientation)");
    }
  }
  for (int v = 0; v < nv; ++v)
    if (!referenced[v])
      throw ValidationError("mesh: vertex " + std::to_string(v) +
                            " is isolated (not referenced by any triangle)");

  // Boundary edges are exactly the edges with a single incident triangle,
  // stored in the direction that triangle traverses them.
  int single_count = 0;
  for (const auto& [key, count] : undirected)
    if (count == 1) ++single_count;
  if (static_cast<int>(mesh.boundary_edges.size()) != single_count)
    throw ValidationError("mesh: boundary edge list does not match edges with one "
                          "incident triangle (declared " +
                          std::to_string(mesh.boundary_edges.size()) + ", found " +
                          std::to_string(single_count) + ")");
  std::set<std::int64_t> seen_boundary;
  std::map<int, int> in_degree, out_degree;
  for (const auto& [a, b] : mesh.boundary_edges) {
    if (a < 0 || a >= nv || b < 0 || b >= nv || a == b)
      throw ValidationError("mesh: invalid boundary edge " + edge_str(a, b));
    if (!seen_boundary.insert(directed_key(a, b, nv)).second)
      throw ValidationError("mesh: duplicate boundary edge " + edge_str(a, b));
    auto it = undirected.find(undirected_key(a, b, nv));
    if (it == undirected.end() || it->second != 1)
      throw ValidationError("mesh: declared boundary edge " + edge_str(a, b) +
                            " is not a boundary edge of the triangulation");
    if (!directed.count(directed_key(a, b, nv)))
      throw ValidationError("mesh: boundary edge " + edge_str(a, b) +
                            " is oriented against its incident triangle "
                            "(interior must lie on the left)");
    ++out_degree[a];
    ++in_degree[b];
  }
  for (const auto& [v, d] : out_degree) {
    if (d != 1 || in_degree[v] != 1)
      throw ValidationError("mesh: boundary loops not closed at vertex " +
                            std::to_string(v) + " (in-degree " +
                            std::to_string(in_degree[v]) + ", out-degree " +
                            std::to_string(d) + ")");
  }
  for (const auto& [v, d] : in_degree) {
    if (out_degree.find(v) == out_degree.end())
      throw ValidationError("mesh: boundary loops not closed at vertex " +
                            std::to_string(v) + " (in-degree " + std::to_string(d) +
                            ", out-degree 0)");
  }
}

int reorient_clockwise_triangles(Mesh& mesh) {
  int flipped = 0;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    if (triangle_area(mesh, t) < 0) {
      std::swap(mesh.triangles[t][1], mesh.triangles[t][2]);
      ++flipped;
    }
  return flipped;
}

void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("mesh: cannot open '" + path + "' for writing");
  out << "# specdeform mesh 1\n";
  out << "vertices " << mesh.num_vertices() << "\n";
  for (const auto& v : mesh.vertices)
    out << format_double(v.x()) << " " << format_double(v.y()) << "\n";
  out << "triangles " << mesh.num_triangles() << "\n";
  for (const auto& t : mesh.triangles)
    out << t[0] << " " << t[1] << " " << t[2] << "\n";
  out << "boundary " << mesh.boundary_edges.size() << "\n";
  for (const auto& e : mesh.boundary_edges) out << e[0] << " " << e[1] << "\n";
  if (!out) throw ValidationError("mesh: failed writing '" + path + "'");
}

namespace {

// Line-oriented reader that skips blanks/comments and tracks line numbers
// for error messages.
class MeshReader {
 public:
  MeshReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw ValidationError("mesh: cannot open '" + path + "' for reading");
  }

  bool next_record(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      tokens.assign(std::istream_iterator<std::string>(ss),
                    std::istream_iterator<std::string>());
      if (!tokens.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("mesh: " + path_ + " line " + std::to_string(line_) +
                          ": " + what);
  }

  int parse_count(const std::vector<std::string>& tokens, const std::string& section) {
    if (tokens.size() != 2 || tokens[0] != section)
      fail("expected '" + section + " <count>'");
    return parse_int(tokens[1], "count");
  }

  int parse_int(const std::string& tok, const std::string& what) {
    size_t pos = 0;
    int value = 0;
    try {
      value = std::stoi(tok, &pos);
    } catch (const std::exception&) {
      fail("expected integer " + what + ", got '" + tok + "'");
    }
    if (pos != tok.size()) fail("expected integer " + what + ", got '" + tok + "'");
    return value;
  }

  double parse_num(const std::string& tok, const std::string& what) {
    size_t pos = 0;
    double value = 0;
    try {
      value = std::stod(tok, &pos);
    } catch (const std::exception&) {
      fail("expected number " + what + ", got '" + tok + "'");
    }
    if (pos != tok.size()) fail("expected number " + what + ", got '" + tok + "'");
    return value;
  }

 private:
  std::string path_;
  std::ifstream in_;
  int line_ = 0;
};

}  // namespace

Mesh load_mesh(const std::string& path, const LoadOptions& options) {
  MeshReader reader(path);
  std::vector<std::string> tok;
  Mesh mesh;

  if (!reader.next_record(tok)) reader.fail("expected 'vertices <count>'");
  const int nv = reader.parse_count(tok, "vertices");
  if (nv < 0) reader.fail("vertex count must be non-negative");
  mesh.vertices.reserve(nv);
  for (int i = 0; i < nv; ++i) {
    if (!reader.next_record(tok)) reader.fail("unexpected end of file in vertex section");
    if (tok.size() != 2) reader.fail("expected 2 coordinates");
    mesh.vertices.emplace_back(reader.parse_num(tok[0], "coordinate"),
                               reader.parse_num(tok[1], "coordinate"));
  }

  if (!reader.next_record(tok)) reader.fail("expected 'triangles <count>'");
  const int nt = reader.parse_count(tok, "triangles");
  if (nt < 0) reader.fail("triangle count must be non-negative");
  mesh.triangles.reserve(nt);
  for (int i = 0; i < nt; ++i) {
    if (!reader.next_record(tok)) reader.fail("unexpected end of file in triangle section");
    if (tok.size() != 3) reader.fail("expected 3 vertex indices");
    mesh.triangles.push_back({reader.parse_int(tok[0], "vertex index"),
                              reader.parse_int(tok[1], "vertex index"),
                              reader.parse_int(tok[2], "vertex index")});
  }

  if (!reader.next_record(tok)) reader.fail("expected 'boundary <count>'");
  const int nb = reader.parse_count(tok, "boundary");
  if (nb < 0) reader.fail("boundary count must be non-negative");
  mesh.boundary_edges.reserve(nb);
  for (int i = 0; i < nb; ++i) {
    if (!reader.next_record(tok)) reader.fail("unexpected end of file in boundary section");
    if (tok.size() != 2) reader.fail("expected 2 vertex indices");
    mesh.boundary_edges.push_back({reader.parse_int(tok[0], "vertex index"),
                                   reader.parse_int(tok[1], "vertex index")});
  }
  if (reader.next_record(tok)) reader.fail("unexpected trailing content");

  if (options.reorient) reorient_clockwise_triangles(mesh);
  validate_mesh(mesh);
  return mesh;
}

}  // namespace specdeform
