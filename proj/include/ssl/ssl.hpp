#pragma once

#include "ssl/convexity.hpp"
#include "ssl/error.hpp"
#include "ssl/expression.hpp"
#include "ssl/fields.hpp"
#include "ssl/geometry.hpp"
#include "ssl/io.hpp"
#include "ssl/matching.hpp"
#include "ssl/material.hpp"
#include "ssl/monge_ampere.hpp"
#include "ssl/parallel.hpp"
#include "ssl/recovery.hpp"
#include "ssl/report.hpp"
#include "ssl/shell_energy.hpp"
