#pragma once
#include "fdot/cli.hpp"
