int dcdm_cli_main(int, char**) { return 0; }
