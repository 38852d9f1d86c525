#include <gtest/gtest.h>

#include "../tests_placeholder.hpp"
