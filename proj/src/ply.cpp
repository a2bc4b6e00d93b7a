#include "facereg/ply.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "facereg/error.hpp"

namespace facereg {

namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

Scalar parse_scalar(const std::string& name) {
  if (name == "char" || name == "int8") return Scalar::I8;
  if (name == "uchar" || name == "uint8") return Scalar::U8;
  if (name == "short" || name == "int16") return Scalar::I16;
  if (name == "ushort" || name == "uint16") return Scalar::U16;
  if (name == "int" || name == "int32") return Scalar::I32;
  if (name == "uint" || name == "uint32") return Scalar::U32;
  if (name == "float" || name == "float32") return Scalar::F32;
  if (name == "double" || name == "float64") return Scalar::F64;
  throw InputError("PLY: unknown property type '" + name + "'");
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::I8:
    case Scalar::U8: return 1;
    case Scalar::I16:
    case Scalar::U16: return 2;
    case Scalar::I32:
    case Scalar::U32:
    case Scalar::F32: return 4;
    case Scalar::F64: return 8;
  }
  return 0;
}

template <class T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double decode(Scalar s, const char* p) {
  switch (s) {
    case Scalar::I8: return load<std::int8_t>(p);
    case Scalar::U8: return load<std::uint8_t>(p);
    case Scalar::I16: return load<std::int16_t>(p);
    case Scalar::U16: return load<std::uint16_t>(p);
    case Scalar::I32: return load<std::int32_t>(p);
    case Scalar::U32: return load<std::uint32_t>(p);
    case Scalar::F32: return load<float>(p);
    case Scalar::F64: return load<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::F32;
  bool is_list = false;
  Scalar count_type = Scalar::U8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

// Pulls scalar values either from ascii tokens or from a binary stream.
class ValueSource {
 public:
  ValueSource(std::istream& in, bool binary) : in_(in), binary_(binary) {}

  double next(Scalar type) {
    if (binary_) {
      char buf[8];
      const auto n = scalar_size(type);
      if (!in_.read(buf, static_cast<std::streamsize>(n))) throw InputError("PLY: unexpected end of binary data");
      return decode(type, buf);
    }
    std::string tok;
    if (!(in_ >> tok)) throw InputError("PLY: unexpected end of ascii data");
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw InputError("PLY: bad ascii value '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      throw InputError("PLY: bad ascii value '" + tok + "'");
    }
  }

 private:
  std::istream& in_;
  bool binary_;
};

}  // namespace

PlyData read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open PLY file: " + path.string());

  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw InputError("not a PLY file: " + path.string());

  bool binary = false;
  std::vector<Element> elements;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else throw InputError("PLY: unsupported format '" + fmt + "'");
    } else if (key == "element") {
      Element e;
      ls >> e.name >> e.count;
      if (!ls) throw InputError("PLY: malformed element line");
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) throw InputError("PLY: property before element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = parse_scalar(ct);
        p.type = parse_scalar(it);
      } else {
        p.type = parse_scalar(type);
        ls >> p.name;
      }
      elements.back().props.push_back(std::move(p));
    } else if (key == "end_header") {
      header_done = true;
      break;
    }
    // comment / obj_info lines are ignored
  }
  if (!header_done) throw InputError("PLY: missing end_header");

  PlyData out;
  ValueSource src(in, binary);
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
      for (int k = 0; k < static_cast<int>(e.props.size()); ++k) {
        const auto& n = e.props[k].name;
        if (e.props[k].is_list) continue;
        if (n == "x") ix = k;
        else if (n == "y") iy = k;
        else if (n == "z") iz = k;
        else if (n == "nx") inx = k;
        else if (n == "ny") iny = k;
        else if (n == "nz") inz = k;
      }
      if (ix < 0 || iy < 0 || iz < 0) throw InputError("PLY: vertex element lacks x/y/z");
      const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
      out.vertices.reserve(e.count);
      if (normals) out.normals.reserve(e.count);
      std::vector<double> vals(e.props.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          const auto& p = e.props[k];
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(src.next(p.count_type));
            for (std::size_t j = 0; j < n; ++j) src.next(p.type);
          } else {
            vals[k] = src.next(p.type);
          }
        }
        out.vertices.emplace_back(vals[ix], vals[iy], vals[iz]);
        if (normals) {
          Vector3 nrm(vals[inx], vals[iny], vals[inz]);
          const double len = nrm.norm();
          if (!(len > 0.0) || !std::isfinite(len)) throw InputError("PLY: zero or invalid normal at vertex " + std::to_string(i));
          out.normals.push_back(nrm / len);
        }
      }
    } else if (e.name == "face") {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.props) {
          if (!p.is_list) {
            src.next(p.type);
            continue;
          }
          const auto n = static_cast<std::size_t>(src.next(p.count_type));
          std::vector<std::uint32_t> idx(n);
          for (auto& v : idx) {
            const double d = src.next(p.type);
            if (d < 0) throw InputError("PLY: negative face index");
            v = static_cast<std::uint32_t>(d);
          }
          if (p.name != "vertex_indices" && p.name != "vertex_index") continue;
          for (std::size_t j = 1; j + 1 < n; ++j) out.faces.push_back({idx[0], idx[j], idx[j + 1]});
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i)
        for (const auto& p : e.props) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(src.next(p.count_type));
            for (std::size_t j = 0; j < n; ++j) src.next(p.type);
          } else {
            src.next(p.type);
          }
        }
    }
  }
  for (const auto& f : out.faces)
    for (auto v : f)
      if (v >= out.vertices.size()) throw InputError("PLY: face index out of range");
  return out;
}

void write_ply(const std::filesystem::path& path, const PlyData& data, PlyEncoding encoding) {
  const bool normals = !data.normals.empty();
  if (normals && data.normals.size() != data.vertices.size())
    throw InputError("PLY: normals/vertices count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write PLY file: " + path.string());

  const bool binary = encoding == PlyEncoding::BinaryLittleEndian;
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << data.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (normals) out << "property float nx\nproperty float ny\nproperty float nz\n";
  if (!data.faces.empty()) out << "element face " << data.faces.size() << "\nproperty list uchar int vertex_indices\n";
  out << "end_header\n";

  if (binary) {
    std::vector<float> row;
    for (std::size_t i = 0; i < data.vertices.size(); ++i) {
      row.clear();
      for (int k = 0; k < 3; ++k) row.push_back(static_cast<float>(data.vertices[i][k]));
      if (normals)
        for (int k = 0; k < 3; ++k) row.push_back(static_cast<float>(data.normals[i][k]));
      out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    for (const auto& f : data.faces) {
      const std::uint8_t n = 3;
      out.write(reinterpret_cast<const char*>(&n), 1);
      for (auto v : f) {
        const auto iv = static_cast<std::int32_t>(v);
        out.write(reinterpret_cast<const char*>(&iv), sizeof(iv));
      }
    }
  } else {
    out.precision(9);
    for (std::size_t i = 0; i < data.vertices.size(); ++i) {
      const auto& p = data.vertices[i];
      out << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z());
      if (normals) {
        const auto& n = data.normals[i];
        out << ' ' << static_cast<float>(n.x()) << ' ' << static_cast<float>(n.y()) << ' ' << static_cast<float>(n.z());
      }
      out << '\n';
    }
    for (const auto& f : data.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  }
  if (!out) throw InputError("failed writing PLY file: " + path.string());
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
  auto data = read_ply(path);
  return PointCloud(std::move(data.vertices), std::move(data.normals));
}

void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud, PlyEncoding encoding) {
  PlyData d;
  d.vertices = cloud.points();
  d.normals = cloud.normals();
  write_ply(path, d, encoding);
}

}  // namespace facereg
