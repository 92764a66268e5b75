// SPDX-License-Identifier: Apache-2.0

#include "dsr/cli.h"

int main(int argc, char** argv) { return dsr::run_cli(argc, argv); }
