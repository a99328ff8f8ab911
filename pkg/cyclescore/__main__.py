from cyclescore.cli import main

raise SystemExit(main())
