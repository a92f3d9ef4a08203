from uashape.cli import main

raise SystemExit(main())
