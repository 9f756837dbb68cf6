#include "igram/binary_io.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <system_error>
#include <utility>

namespace igram {

void put_le_width(std::ostream& out, std::uint64_t value, std::size_t width) {
  unsigned char buf[8];
  for (std::size_t i = 0; i < width; ++i) {
    buf[i] = static_cast<unsigned char>(value & 0xFFu);
    value >>= 8;
  }
  out.write(reinterpret_cast<const char*>(buf), static_cast<std::streamsize>(width));
}

std::uint64_t ByteCursor::read(std::size_t width) {
  auto s = take(width);
  return get_le(s.data(), width);
}

float ByteCursor::read_f32() {
  auto s = take(4);
  return get_le_f32(s.data());
}

void ByteCursor::expect_magic(const char (&magic)[5]) {
  const auto at = pos_;
  auto s = take(4);
  if (std::memcmp(s.data(), magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected \"") + magic + "\"", at);
  }
}

std::span<const unsigned char> ByteCursor::take(std::uint64_t n) {
  if (n > remaining()) {
    throw FormatError("truncated input: need " + std::to_string(n) + " bytes, have " +
                          std::to_string(remaining()),
                      pos_);
  }
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

MappedFile::MappedFile(const std::filesystem::path& path) {
  int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) {
    throw std::system_error(errno, std::generic_category(), "open " + path.string());
  }
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    int err = errno;
    ::close(fd);
    throw std::system_error(err, std::generic_category(), "stat " + path.string());
  }
  size_ = static_cast<std::size_t>(st.st_size);
  if (size_ > 0) {
    void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
    if (p == MAP_FAILED) {
      int err = errno;
      ::close(fd);
      throw std::system_error(err, std::generic_category(), "mmap " + path.string());
    }
    data_ = static_cast<const unsigned char*>(p);
  }
  ::close(fd);
}

MappedFile::~MappedFile() { release(); }

MappedFile::MappedFile(MappedFile&& other) noexcept
    : data_(std::exchange(other.data_, nullptr)), size_(std::exchange(other.size_, 0)) {}

MappedFile& MappedFile::operator=(MappedFile&& other) noexcept {
  if (this != &other) {
    release();
    data_ = std::exchange(other.data_, nullptr);
    size_ = std::exchange(other.size_, 0);
  }
  return *this;
}

void MappedFile::release() {
  if (data_ != nullptr) {
    ::munmap(const_cast<unsigned char*>(data_), size_);
    data_ = nullptr;
    size_ = 0;
  }
}

}  // namespace igram
